"""Ground-truth noisy measurement devices and shot-sampled circuit execution."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channels import (
    ChoiMatrix,
    QndMeasurement,
    adjoint_liouville,
    apply_liouville,
    apply_process,
    bits,
    depolarize,
    liouville_kron,
    measurement_tensor,
    unitary_choi,
)
from .circuits import (
    GST,
    NATIVE_GATES,
    PREP_GATES,
    QNDMT_2Q,
    ROTATION_GATES,
    Batch,
    DeviceGraph,
    Schedule,
)
from .counts import CountsTable, Record, target_id
from .linalg import SX

DEFAULT_SHOTS = 8192
MAX_SHOTS = 2 ** 62


def thermal_decay_probability(t_meas: float, t1: float) -> float:
    """Probability that ``|1>`` relaxes during a measurement window of length ``t_meas``."""
    return -math.expm1(-t_meas / t1)


def misassignment(e01: float, e10: float | None = None) -> np.ndarray:
    """Row-stochastic readout matrix ``[true, reported]``."""
    e10 = e01 if e10 is None else e10
    return np.array([[1 - e01, e01], [e10, 1 - e10]], dtype=float)


@dataclass(frozen=True)
class NoiseParams:
    """Per-qubit measurement noise.

    ``p_decay=None`` derives the relaxation probability from ``T_meas`` and
    ``T1`` (both in microseconds).
    """

    p_decay: float | None = None
    p_excite: float = 0.0
    eps_assign: tuple[tuple[float, float], tuple[float, float]] = ((1.0, 0.0), (0.0, 1.0))
    T_meas: float = 5.0
    T1: float = 100.0
    gate_depolarizing: float = 0.0

    def __post_init__(self):
        eps = np.asarray(self.eps_assign, dtype=float)
        if eps.shape != (2, 2):
            raise ValueError("eps_assign must be 2x2")
        if np.any(eps < 0) or np.any(eps > 1) or not np.allclose(eps.sum(axis=1), 1.0, atol=1e-12, rtol=0):
            raise ValueError(f"eps_assign rows must be probability vectors, got {eps.tolist()}")
        object.__setattr__(self, "eps_assign", tuple(tuple(float(x) for x in row) for row in eps))
        for name in ("p_excite", "gate_depolarizing"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} is not a probability")
        if self.p_decay is not None and not 0.0 <= self.p_decay <= 1.0:
            raise ValueError(f"p_decay={self.p_decay} is not a probability")
        if self.T_meas < 0 or self.T1 <= 0:
            raise ValueError("T_meas must be >= 0 and T1 > 0")

    @property
    def decay(self) -> float:
        if self.p_decay is not None:
            return self.p_decay
        return thermal_decay_probability(self.T_meas, self.T1)

    @classmethod
    def ideal(cls) -> "NoiseParams":
        return cls(p_decay=0.0)


def build_decay_channel(p: NoiseParams) -> QndMeasurement:
    """Projective readout followed by classical misassignment and relaxation.

    ``E_n(rho) = sum_m eps[m, n] rho_mm L(|m><m|)`` where ``L`` moves
    ``|1> -> |0>`` with probability ``decay`` and ``|0> -> |1>`` with
    probability ``p_excite``.
    """
    eps = np.asarray(p.eps_assign)
    pd, pe = p.decay, p.p_excite
    relaxed = (
        np.diag([1 - pe, pe]).astype(complex),
        np.diag([pd, 1 - pd]).astype(complex),
    )
    blocks = []
    for n in range(2):
        def fn(x, n=n):
            return sum(eps[m, n] * x[m, m] * relaxed[m] for m in range(2))

        blocks.append(ChoiMatrix.from_map(fn, 2, (n,)))
    return QndMeasurement(tuple(blocks))


def correlated_flip_channel() -> QndMeasurement:
    """Ideal two-qubit readout except that outcome ``11`` leaves both qubits in ``|00>``."""
    blocks = []
    for idx in range(4):
        out = 0 if idx == 3 else idx

        def fn(x, idx=idx, out=out):
            y = np.zeros((4, 4), dtype=complex)
            y[out, out] = x[idx, idx]
            return y

        blocks.append(ChoiMatrix.from_map(fn, 4, bits(idx, 2)))
    return QndMeasurement(tuple(blocks))


def build_edge_channel(a: QndMeasurement, b: QndMeasurement, strength: float) -> QndMeasurement:
    """Mixture of the product readout with a correlated-flip block."""
    if not 0.0 <= strength <= 1.0:
        raise ValueError(f"crosstalk strength {strength} outside [0, 1]")
    if a.dim != 2 or b.dim != 2:
        raise ValueError("edge channels combine two single-qubit measurements")
    product = measurement_tensor(a, b)
    if strength == 0.0:
        return product
    k = correlated_flip_channel()
    return QndMeasurement(tuple(
        p.with_psd((1 - strength) * p.psd + strength * q.psd) for p, q in zip(product, k)
    ))


def _reset_map(x: np.ndarray, n: int, fidelity: float) -> np.ndarray:
    tr = np.trace(x)
    y = fidelity * tr * np.diag([1.0, 0.0]).astype(complex) + (1 - fidelity) * x
    return SX @ y @ SX if n else y


def wrap_measure_and_reset(m: QndMeasurement, reset_fidelity: float) -> QndMeasurement:
    """Follow each outcome with a reset to ``|0>`` and a NOT conditioned on the reported bit.

    Two-qubit measurements get the reset on both qubits.
    """
    if not 0.0 <= reset_fidelity <= 1.0:
        raise ValueError(f"reset fidelity {reset_fidelity} outside [0, 1]")
    blocks = []
    for c in m:
        if m.dim == 2:
            def post(y, n=c.outcome[0]):
                return _reset_map(y, n, reset_fidelity)
        elif m.dim == 4:
            def post(y, lab=c.outcome):
                t = y.reshape(2, 2, 2, 2)
                out = np.zeros_like(t)
                # apply single-qubit maps factor by factor through the Choi of each
                for i in range(2):
                    for j in range(2):
                        unit = np.zeros((2, 2), dtype=complex)
                        unit[i, j] = 1.0
                        ra = _reset_map(unit, lab[0], reset_fidelity)
                        for k in range(2):
                            for l in range(2):  # noqa: E741
                                unit_b = np.zeros((2, 2), dtype=complex)
                                unit_b[k, l] = 1.0
                                rb = _reset_map(unit_b, lab[1], reset_fidelity)
                                out += t[i, k, j, l] * np.einsum("ac,bd->abcd", ra, rb)
                return out.reshape(4, 4)
        else:
            raise ValueError("measure-and-reset is defined for one or two qubits")
        blocks.append(ChoiMatrix.from_map(lambda x, c=c, post=post: post(apply_process(c, x)), m.dim, c.outcome))
    return QndMeasurement(tuple(blocks))


@dataclass(frozen=True)
class DeviceModel:
    graph: DeviceGraph
    qubit_channels: tuple[QndMeasurement, ...]
    edge_channels: dict = field(repr=False)  # (a, b) -> QndMeasurement
    init_states: tuple[np.ndarray, ...] = field(repr=False, default=())
    gate_depolarizing: tuple[float, ...] = ()
    rng_seed: int = 0

    def __post_init__(self):
        n = self.graph.n_qubits
        if len(self.qubit_channels) != n:
            raise ValueError("one measurement channel per qubit is required")
        if set(self.edge_channels) != set(self.graph.edges):
            raise ValueError("edge channels must match the device edges")
        if not self.init_states:
            zero = np.diag([1.0, 0.0]).astype(complex)
            object.__setattr__(self, "init_states", tuple(zero for _ in range(n)))
        if not self.gate_depolarizing:
            object.__setattr__(self, "gate_depolarizing", tuple(0.0 for _ in range(n)))

    @classmethod
    def build(cls, graph: DeviceGraph, noise, crosstalk_strength: float = 0.0, seed: int = 0,
              reset_fidelity: float | None = None) -> "DeviceModel":
        """Device from per-qubit noise (a single ``NoiseParams`` applies to all qubits).

        ``reset_fidelity`` wraps every channel in a measure-and-reset.
        """
        if isinstance(noise, NoiseParams):
            noise = [noise] * graph.n_qubits
        noise = list(noise)
        if len(noise) != graph.n_qubits:
            raise ValueError(f"{len(noise)} noise entries for {graph.n_qubits} qubits")
        direct = [build_decay_channel(p) for p in noise]
        edges = {e: build_edge_channel(direct[e[0]], direct[e[1]], crosstalk_strength) for e in graph.edges}
        qubits = direct
        if reset_fidelity is not None:
            qubits = [wrap_measure_and_reset(m, reset_fidelity) for m in direct]
            edges = {e: wrap_measure_and_reset(m, reset_fidelity) for e, m in edges.items()}
        return cls(graph, tuple(qubits), edges, gate_depolarizing=tuple(p.gate_depolarizing for p in noise),
                   rng_seed=seed)

    def gate_process(self, qubit: int, label: str) -> ChoiMatrix:
        c = unitary_choi(NATIVE_GATES[label].unitary)
        p = self.gate_depolarizing[qubit]
        return depolarize(c, p) if p else c

    def compiled_liouville(self, qubit: int, natives) -> np.ndarray:
        lv = np.eye(4, dtype=complex)
        for g in natives:
            lv = self.gate_process(qubit, g).liouville @ lv
        return lv


def _circuit_effects(model: DeviceModel, batch: Batch, target):
    """Prepared state, Liouville matrix of the rotation and final-measurement POVM."""
    circ = batch.circuit
    if circ.kind == QNDMT_2Q:
        a, b = target
        rho = np.kron(
            apply_liouville(model.compiled_liouville(a, PREP_GATES[circ.prep[0]].native), model.init_states[a]),
            apply_liouville(model.compiled_liouville(b, PREP_GATES[circ.prep[1]].native), model.init_states[b]),
        )
        rot = liouville_kron(
            model.compiled_liouville(a, ROTATION_GATES[circ.rotation[0]].native),
            model.compiled_liouville(b, ROTATION_GATES[circ.rotation[1]].native),
        )
        meas = model.edge_channels[target]
    else:
        q = target
        rho = apply_liouville(model.compiled_liouville(q, PREP_GATES[circ.prep[0]].native), model.init_states[q])
        rot = model.compiled_liouville(q, ROTATION_GATES[circ.rotation[0]].native)
        meas = model.qubit_channels[q]
    return rho, rot, meas


def circuit_probabilities(model: DeviceModel, batch: Batch, target) -> np.ndarray:
    """Exact outcome distribution of one target in one batch.

    GST: shape ``(1, 2)`` with ``Tr(Pi_l F_k F_j F_i(rho))``. QND-MT: shape
    ``(n, m)`` with ``Tr[(F_U^dagger(Pi_m) (x) F_V(rho)^T) Yt_n]``.
    """
    circ = batch.circuit
    if circ.kind == GST:
        q = target
        povm = model.qubit_channels[q].povm()
        lv = model.compiled_liouville(q, circ.prep + circ.rotation)
        out = apply_liouville(lv, model.init_states[q])
        return np.array([[np.real(np.trace(e @ out)) for e in povm]])
    rho, rot, meas = _circuit_effects(model, batch, target)
    povm = meas.povm()
    effects = [adjoint_liouville(rot, e) for e in povm]
    probs = np.empty((len(meas), len(povm)))
    for n, block in enumerate(meas):
        for m, eff in enumerate(effects):
            op = np.kron(eff, rho.T)
            probs[n, m] = np.real(np.sum(op.T * block.psd))
    return probs


def _stream(seed: int, batch: int, target) -> np.random.Generator:
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, int(batch)]
    key += list(target) if isinstance(target, tuple) else [int(target), 2 ** 32 - 1]
    # Philox is counter based: every (seed, batch, target) owns an independent stream
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def sample_counts(probs: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    p = np.clip(np.real(probs).reshape(-1), 0.0, None)
    total = p.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"outcome probabilities sum to {total}")
    return rng.multinomial(shots, p / total).reshape(probs.shape)


def execute(model: DeviceModel, schedule: Schedule, shots: int = DEFAULT_SHOTS, seed: int | None = None,
            jobs: int = 1) -> CountsTable:
    """Sample every (batch, target) of a schedule; results do not depend on ``jobs``."""
    if not isinstance(shots, (int, np.integer)) or shots < 1:
        raise ValueError(f"shots must be a positive integer, got {shots!r}")
    if shots > MAX_SHOTS:
        raise OverflowError(f"{shots} shots overflow the count type")
    if schedule.graph != model.graph:
        raise ValueError("schedule was built for a different device graph")
    seed = model.rng_seed if seed is None else seed

    def run(batch: Batch) -> list[Record]:
        recs = []
        for t in batch.targets:
            probs = circuit_probabilities(model, batch, t)
            counts = sample_counts(probs, int(shots), _stream(seed, batch.index, t))
            recs.append(Record(batch.index, target_id(t), batch.circuit.prep_label,
                               batch.circuit.rotation_label, counts))
        return recs

    table = CountsTable(int(shots))
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(run, schedule.batches))
    else:
        results = [run(b) for b in schedule.batches]
    for recs in results:
        for r in recs:
            table.add(r)
    return table


def ideal_model(graph: DeviceGraph, seed: int = 0) -> DeviceModel:
    return DeviceModel.build(graph, NoiseParams.ideal(), 0.0, seed)


__all__ = [
    "DEFAULT_SHOTS",
    "DeviceModel",
    "NoiseParams",
    "build_decay_channel",
    "build_edge_channel",
    "circuit_probabilities",
    "correlated_flip_channel",
    "execute",
    "ideal_model",
    "misassignment",
    "thermal_decay_probability",
    "wrap_measure_and_reset",
]
