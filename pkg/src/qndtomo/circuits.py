"""Gate sets, tomography circuit families and parallel batch scheduling."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .linalg import I2, SX, SY, dagger


def _rot(pauli: np.ndarray, sign: int) -> np.ndarray:
    # exp(-+ i pi sigma / 4)
    return (np.cos(np.pi / 4) * I2 - sign * 1j * np.sin(np.pi / 4) * pauli).astype(complex)


@dataclass(frozen=True)
class Gate:
    label: str
    unitary: np.ndarray = field(repr=False, compare=False)
    # the native gates this gate is compiled into, applied left to right
    native: tuple[str, ...] = ()

    def __post_init__(self):
        u = np.array(self.unitary, dtype=complex)
        if u.shape != (2, 2) or not np.allclose(dagger(u) @ u, I2, atol=1e-12):
            raise ValueError(f"gate {self.label!r} is not a 2x2 unitary")
        u.setflags(write=False)
        object.__setattr__(self, "unitary", u)
        if not self.native:
            object.__setattr__(self, "native", (self.label,))


# native single-qubit gate set used by GST and to compile V/U
NATIVE_GATES: dict[str, Gate] = {
    "I": Gate("I", I2),
    "X": Gate("X", SX),
    "Y90": Gate("Y90", _rot(SY, +1)),
    "X90": Gate("X90", _rot(SX, +1)),
}
GST_LABELS: tuple[str, ...] = ("I", "X", "Y90", "X90")


def _compiled(label: str, natives: Sequence[str]) -> Gate:
    u = I2
    for n in natives:
        u = NATIVE_GATES[n].unitary @ u
    return Gate(label, u, tuple(natives))


# preparation gates: +z, -z, +x, -x, -y, +y eigenstates from |0>.  The
# exp(+i pi sigma/4) rotations are compiled as X followed by the native
# exp(-i pi sigma/4), which agrees with them on |0> up to a global phase.
PREP_GATES: dict[str, Gate] = {
    "I": _compiled("I", ("I",)),
    "X": _compiled("X", ("X",)),
    "Y90": _compiled("Y90", ("Y90",)),
    "Ym90": _compiled("Ym90", ("X", "Y90")),
    "X90": _compiled("X90", ("X90",)),
    "Xm90": _compiled("Xm90", ("X", "X90")),
}
PREP_LABELS: tuple[str, ...] = tuple(PREP_GATES)

ROTATION_GATES: dict[str, Gate] = {k: _compiled(k, (k,)) for k in ("I", "Y90", "X90")}
ROTATION_LABELS: tuple[str, ...] = tuple(ROTATION_GATES)

GST = "GST"
QNDMT_1Q = "QNDMT-1Q"
QNDMT_2Q = "QNDMT-2Q"


@dataclass(frozen=True)
class Circuit:
    """One tomography circuit on a block of one or two qubits.

    GST circuits: ``prep = (G_i, G_j)``, ``rotation = (G_k,)`` and a single
    final measurement. QND-MT circuits: ``prep`` holds one V label and
    ``rotation`` one U label per block qubit, with a measurement in between.
    """

    kind: str
    prep: tuple[str, ...]
    rotation: tuple[str, ...]
    reset_variant: bool = False

    def __post_init__(self):
        if self.kind == GST:
            if len(self.prep) != 2 or len(self.rotation) != 1:
                raise ValueError("GST circuits have exactly three gate slots")
            if any(g not in NATIVE_GATES for g in self.prep + self.rotation):
                raise ValueError(f"unknown GST gate in {self.prep + self.rotation}")
        elif self.kind in (QNDMT_1Q, QNDMT_2Q):
            width = 1 if self.kind == QNDMT_1Q else 2
            if len(self.prep) != width or len(self.rotation) != width:
                raise ValueError(f"{self.kind} circuits need {width} V and {width} U labels")
            if any(v not in PREP_GATES for v in self.prep) or any(u not in ROTATION_GATES for u in self.rotation):
                raise ValueError(f"unknown QND-MT gate in {self.prep}/{self.rotation}")
        else:
            raise ValueError(f"unknown circuit kind {self.kind!r}")

    @property
    def mid_measurement(self) -> bool:
        return self.kind != GST

    @property
    def width(self) -> int:
        return 2 if self.kind == QNDMT_2Q else 1

    @property
    def gate_slots(self) -> tuple[str, ...]:
        return self.prep + self.rotation

    @property
    def prep_label(self) -> str:
        return ",".join(self.prep) if self.kind == GST else ":".join(self.prep)

    @property
    def rotation_label(self) -> str:
        return ":".join(self.rotation)

    def qubit_program(self, slot: int = 0) -> list[str]:
        """Native-gate and measurement sequence for one block qubit."""
        if self.kind == GST:
            return [*self.prep, *self.rotation, "M"]
        seq = list(PREP_GATES[self.prep[slot]].native)
        seq.append("M")
        seq.extend(ROTATION_GATES[self.rotation[slot]].native)
        seq.append("M")
        return seq


def gst_circuits() -> list[tuple[str, str, str]]:
    """All ordered triples ``(i, j, k)`` over the native gate set."""
    return list(itertools.product(GST_LABELS, repeat=3))


def qndmt_circuits(n_qubits_in_block: int, reset_variant: bool = False) -> list[Circuit]:
    if n_qubits_in_block == 1:
        kind = QNDMT_1Q
    elif n_qubits_in_block == 2:
        kind = QNDMT_2Q
    else:
        raise ValueError(f"QND-MT blocks have one or two qubits, not {n_qubits_in_block}")
    preps = list(itertools.product(PREP_LABELS, repeat=n_qubits_in_block))
    rots = list(itertools.product(ROTATION_LABELS, repeat=n_qubits_in_block))
    return [Circuit(kind, v, u, reset_variant) for v in preps for u in rots]


@dataclass(frozen=True)
class DeviceGraph:
    n_qubits: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("a device needs at least one qubit")
        seen = set()
        clean = []
        for e in self.edges:
            a, b = (int(x) for x in e)
            if a == b:
                raise ValueError(f"self-loop on qubit {a}")
            if not (0 <= a < self.n_qubits and 0 <= b < self.n_qubits):
                raise ValueError(f"edge ({a}, {b}) references a qubit outside 0..{self.n_qubits - 1}")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            clean.append((a, b))
        object.__setattr__(self, "edges", tuple(clean))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def degree(self, q: int) -> int:
        return sum(q in e for e in self.edges)

    @property
    def max_degree(self) -> int:
        return max((self.degree(q) for q in range(self.n_qubits)), default=0)


def edge_coloring(g: DeviceGraph) -> list[list[tuple[int, int]]]:
    """Partition the edges into groups with pairwise-disjoint endpoints.

    Greedy colouring in order of decreasing edge degree (sum of endpoint
    degrees), ties broken by ``(min qubit, max qubit)``. Greedy can exceed
    ``max_degree + 1`` colours on unlucky graphs; in that case the Misra-Gries
    construction is used instead, which always achieves that bound.
    """
    if not g.edges:
        return []
    deg = [g.degree(q) for q in range(g.n_qubits)]
    order = sorted(g.edges, key=lambda e: (-(deg[e[0]] + deg[e[1]]), min(e), max(e)))
    colour: dict[tuple[int, int], int] = {}
    used: dict[int, set[int]] = {q: set() for q in range(g.n_qubits)}
    for a, b in order:
        c = 0
        while c in used[a] or c in used[b]:
            c += 1
        colour[(a, b)] = c
        used[a].add(c)
        used[b].add(c)
    if max(colour.values()) + 1 > g.max_degree + 1:
        colour = _misra_gries(g)
    n_colours = max(colour.values()) + 1
    groups = [[e for e in g.edges if colour[e] == c] for c in range(n_colours)]
    return [grp for grp in groups if grp]


def _misra_gries(g: DeviceGraph) -> dict[tuple[int, int], int]:
    n_col = g.max_degree + 1
    col: dict[frozenset, int] = {}
    at: dict[int, dict[int, int]] = {q: {} for q in range(g.n_qubits)}  # vertex -> colour -> neighbour

    def free(v: int, c: int) -> bool:
        return c not in at[v]

    def first_free(v: int) -> int:
        return next(c for c in range(n_col) if free(v, c))

    def set_col(u: int, v: int, c: int) -> None:
        col[frozenset((u, v))] = c
        at[u][c] = v
        at[v][c] = u

    def clear(u: int, v: int) -> None:
        c = col.pop(frozenset((u, v)))
        del at[u][c]
        del at[v][c]

    for u, v in sorted(g.edges, key=lambda e: (min(e), max(e))):
        # maximal fan of u starting at v
        fan = [v]
        in_fan = {v}
        while True:
            last = fan[-1]
            nxt = None
            for c in range(n_col):
                if free(last, c) and c in at[u]:
                    w = at[u][c]
                    if w not in in_fan:
                        nxt = w
                        break
            if nxt is None:
                break
            fan.append(nxt)
            in_fan.add(nxt)
        c = first_free(u)
        d = first_free(fan[-1])
        # invert the cd-path starting at u
        if c != d:
            path = [u]
            x, want = u, d
            while want in at[x]:
                y = at[x][want]
                path.append(y)
                x, want = y, (c if want == d else d)
            edges_path = list(zip(path, path[1:]))
            old = [col[frozenset(e)] for e in edges_path]
            for e in edges_path:
                clear(*e)
            for e, oc in zip(edges_path, old):
                set_col(e[0], e[1], c if oc == d else d)
        # shorten the fan to the first w with d free, then rotate
        k = next(i for i, w in enumerate(fan) if free(w, d))
        for i in range(k):
            nc = col[frozenset((u, fan[i + 1]))]
            clear(u, fan[i + 1])
            if frozenset((u, fan[i])) in col:
                clear(u, fan[i])
            set_col(u, fan[i], nc)
        if frozenset((u, fan[k])) in col:
            clear(u, fan[k])
        set_col(u, fan[k], d)
    return {e: col[frozenset(e)] for e in g.edges}


@dataclass(frozen=True)
class Batch:
    """Circuits executed simultaneously: the same circuit on every target.

    Targets are qubit indices for GST and single-qubit QND-MT batches and
    ``(a, b)`` edges for two-qubit batches.
    """

    index: int
    circuit: Circuit
    targets: tuple
    color_group: int | None = None

    def qubit_assignment(self, n_qubits: int) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {}
        if self.circuit.kind == QNDMT_2Q:
            for a, b in self.targets:
                out[a] = self.circuit.qubit_program(0)
                out[b] = self.circuit.qubit_program(1)
        else:
            for q in self.targets:
                out[q] = self.circuit.qubit_program(0)
        for q in range(n_qubits):
            # idle qubits get identities and are not measured mid-circuit
            out.setdefault(q, ["I"])
        return dict(sorted(out.items()))


@dataclass(frozen=True)
class Schedule:
    graph: DeviceGraph
    color_groups: tuple[tuple[tuple[int, int], ...], ...]
    batches: tuple[Batch, ...]

    def __len__(self) -> int:
        return len(self.batches)

    def counts_by_kind(self) -> dict[str, int]:
        out = {GST: 0, QNDMT_1Q: 0, QNDMT_2Q: 0}
        for b in self.batches:
            out[b.circuit.kind] += 1
        return out

    def to_dict(self) -> dict:
        return {
            "n_qubits": self.graph.n_qubits,
            "edges": [list(e) for e in self.graph.edges],
            "color_groups": [[list(e) for e in grp] for grp in self.color_groups],
            "batches": [
                {
                    "batch": b.index,
                    "kind": b.circuit.kind,
                    "prep": list(b.circuit.prep),
                    "rotation": list(b.circuit.rotation),
                    "reset_variant": b.circuit.reset_variant,
                    "color_group": b.color_group,
                    "targets": [list(t) if isinstance(t, tuple) else t for t in b.targets],
                    "qubits": {str(q): prog for q, prog in b.qubit_assignment(self.graph.n_qubits).items()},
                    "measurement_slots": {
                        str(q): [i for i, g in enumerate(prog) if g == "M"]
                        for q, prog in b.qubit_assignment(self.graph.n_qubits).items()
                    },
                }
                for b in self.batches
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "Schedule":
        graph = DeviceGraph(int(doc["n_qubits"]), tuple(tuple(e) for e in doc["edges"]))
        groups = tuple(tuple(tuple(e) for e in grp) for grp in doc["color_groups"])
        batches = []
        for item in doc["batches"]:
            circ = Circuit(item["kind"], tuple(item["prep"]), tuple(item["rotation"]), bool(item["reset_variant"]))
            targets = tuple(tuple(t) if isinstance(t, list) else int(t) for t in item["targets"])
            batches.append(Batch(int(item["batch"]), circ, targets, item.get("color_group")))
        return cls(graph, groups, tuple(batches))


def build_schedule(g: DeviceGraph, reset_variant: bool = False) -> Schedule:
    """GST batches first, then single-qubit QND-MT, then one block of
    two-qubit QND-MT batches per colour group."""
    groups = edge_coloring(g)
    qubits = tuple(range(g.n_qubits))
    batches: list[Batch] = []
    for i, j, k in gst_circuits():
        batches.append(Batch(len(batches), Circuit(GST, (i, j), (k,), reset_variant), qubits))
    for circ in qndmt_circuits(1, reset_variant):
        batches.append(Batch(len(batches), circ, qubits))
    for c, grp in enumerate(groups):
        for circ in qndmt_circuits(2, reset_variant):
            batches.append(Batch(len(batches), circ, tuple(grp), c))
    return Schedule(g, tuple(tuple(grp) for grp in groups), tuple(batches))


def planar_circuit_bound(max_colors: int = 4) -> int:
    """Worst-case batch count when at most ``max_colors`` edge groups are needed."""
    return max_colors * len(qndmt_circuits(2)) + len(gst_circuits()) + len(qndmt_circuits(1))


def seven_qubit_h_layout() -> DeviceGraph:
    """The 7-qubit "H"-shaped layout characterised in the experiment."""
    return DeviceGraph(7, ((0, 1), (1, 2), (1, 3), (3, 5), (4, 5), (5, 6)))


def heavy_hex_65() -> DeviceGraph:
    """65-qubit heavy-hexagon layout: five rows joined by bridge qubits."""
    rows = [range(0, 10), range(13, 24), range(27, 38), range(41, 52), range(55, 65)]
    edges: list[tuple[int, int]] = []
    for r in rows:
        r = list(r)
        edges.extend(zip(r, r[1:]))
    bridges = {
        10: (0, 13), 11: (4, 17), 12: (8, 21),
        24: (15, 29), 25: (19, 33), 26: (23, 37),
        38: (27, 41), 39: (31, 45), 40: (35, 49),
        52: (43, 56), 53: (47, 60), 54: (51, 64),
    }
    for mid, (a, b) in bridges.items():
        edges.extend([(a, mid), (mid, b)])
    return DeviceGraph(65, tuple(edges))


def graph_from_edges(n_qubits: int, edges: Iterable[Sequence[int]]) -> DeviceGraph:
    return DeviceGraph(n_qubits, tuple(tuple(e) for e in edges))
