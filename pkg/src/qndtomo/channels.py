"""Choi-matrix description of (multi-outcome) measurement processes.

Conventions
-----------
A process ``E`` on a ``d``-level system is stored through its reshuffled,
positive-semidefinite Choi matrix

    Yt = sum_{k,l} E(|k><l|) (x) |k><l|,   <ik|Yt|jl> = <i|E(|k><l|)|j>,

with rows indexed by ``(output i, input k)``. The element accessor
:meth:`ChoiMatrix.element` uses the other ordering,

    Y^{ijkl} = <ij|Y|kl> = <ik|Yt|jl>,

which is also the matrix of ``E`` acting on row-major vectorised operators
(the Liouville matrix), see :meth:`ChoiMatrix.liouville`.

Outcome labels are tuples of bits ordered like the tensor factors: for a
two-qubit block ``(a, b)`` the label ``(n, m)`` has ``n`` for qubit ``a`` and
the basis index is ``2 * n + m``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .linalg import ITOL, dagger, herm, kron

TP_TOL = 1e-6


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def bits(index: int, n_bits: int) -> tuple[int, ...]:
    return tuple((index >> (n_bits - 1 - q)) & 1 for q in range(n_bits))


def bits_to_index(label: Sequence[int]) -> int:
    out = 0
    for b in label:
        out = 2 * out + int(b)
    return out


def label_str(label: Sequence[int]) -> str:
    return "".join(str(int(b)) for b in label)


def n_qubits(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if 2 ** n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


@dataclass(frozen=True)
class ChoiMatrix:
    """One completely positive block ``E_n`` of a measurement (or a full process)."""

    dim: int
    outcome: tuple[int, ...]
    psd: np.ndarray = field(repr=False)

    def __post_init__(self):
        psd = _frozen(self.psd)
        if psd.shape != (self.dim ** 2, self.dim ** 2):
            raise ValueError(f"Choi matrix of dim {self.dim} needs shape {(self.dim ** 2,) * 2}, got {psd.shape}")
        object.__setattr__(self, "psd", psd)
        object.__setattr__(self, "outcome", tuple(int(b) for b in self.outcome))

    @property
    def tensor(self) -> np.ndarray:
        """Four-index view ``T[i, k, j, l] = <ik|Yt|jl>``."""
        d = self.dim
        return self.psd.reshape(d, d, d, d)

    @property
    def liouville(self) -> np.ndarray:
        """Row-major Liouville matrix ``Y`` with ``<ij|Y|kl> = <ik|Yt|jl>``."""
        d = self.dim
        return self.tensor.transpose(0, 2, 1, 3).reshape(d * d, d * d)

    def element(self, i: int, j: int, k: int, l: int) -> complex:  # noqa: E741
        return complex(self.tensor[i, k, j, l])

    @classmethod
    def from_liouville(cls, dim: int, outcome: Sequence[int], matrix: np.ndarray) -> "ChoiMatrix":
        m = np.asarray(matrix, dtype=complex).reshape(dim, dim, dim, dim)
        return cls(dim, tuple(outcome), m.transpose(0, 2, 1, 3).reshape(dim * dim, dim * dim))

    @classmethod
    def from_map(cls, fn: Callable[[np.ndarray], np.ndarray], dim: int, outcome: Sequence[int] = ()) -> "ChoiMatrix":
        t = np.zeros((dim,) * 4, dtype=complex)
        for k in range(dim):
            for l in range(dim):  # noqa: E741
                unit = np.zeros((dim, dim), dtype=complex)
                unit[k, l] = 1.0
                t[:, k, :, l] = fn(unit)
        return cls(dim, tuple(outcome), t.reshape(dim * dim, dim * dim))

    @property
    def is_psd(self) -> bool:
        return bool(np.allclose(self.psd, dagger(self.psd), atol=ITOL)
                    and np.linalg.eigvalsh(herm(self.psd)).min() >= -ITOL)

    def partial_trace_output(self) -> np.ndarray:
        """``Tr_out Yt``; equals the transpose of the POVM element."""
        return np.einsum("ikil->kl", self.tensor)

    def with_psd(self, psd: np.ndarray) -> "ChoiMatrix":
        return ChoiMatrix(self.dim, self.outcome, psd)

    def to_dict(self) -> dict:
        flat = self.psd.reshape(-1)
        return {
            "dim": self.dim,
            "outcome": label_str(self.outcome),
            "psd": [[float(z.real), float(z.imag)] for z in flat],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ChoiMatrix":
        dim = int(doc["dim"])
        arr = np.asarray(doc["psd"], dtype=float)
        psd = (arr[:, 0] + 1j * arr[:, 1]).reshape(dim * dim, dim * dim)
        return cls(dim, tuple(int(c) for c in doc["outcome"]), psd)


@dataclass(frozen=True)
class Povm:
    elements: tuple[np.ndarray, ...]

    def __post_init__(self):
        els = tuple(_frozen(e) for e in self.elements)
        if not els:
            raise ValueError("a POVM needs at least one element")
        shape = els[0].shape
        if any(e.shape != shape or e.ndim != 2 or shape[0] != shape[1] for e in els):
            raise ValueError("POVM elements must be square and share a shape")
        object.__setattr__(self, "elements", els)

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    def __len__(self) -> int:
        return len(self.elements)

    def __getitem__(self, n: int) -> np.ndarray:
        return self.elements[n]

    def __iter__(self):
        return iter(self.elements)

    def completeness_residual(self) -> float:
        return float(np.abs(sum(self.elements) - np.eye(self.dim)).max())

    def is_valid(self, psd_tol: float = ITOL, sum_tol: float = TP_TOL) -> bool:
        psd = all(np.linalg.eigvalsh(herm(e)).min() >= -psd_tol for e in self.elements)
        return psd and self.completeness_residual() <= sum_tol

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        return np.array([np.real(np.trace(e @ rho)) for e in self.elements])

    def to_dict(self) -> dict:
        nb = n_qubits(len(self.elements)) if len(self.elements) > 1 else 0
        return {
            "dim": self.dim,
            "elements": [
                {"outcome": label_str(bits(n, nb)), "matrix": [[float(z.real), float(z.imag)] for z in e.reshape(-1)]}
                for n, e in enumerate(self.elements)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Povm":
        dim = int(doc["dim"])
        els = []
        for item in doc["elements"]:
            arr = np.asarray(item["matrix"], dtype=float)
            els.append((arr[:, 0] + 1j * arr[:, 1]).reshape(dim, dim))
        return cls(tuple(els))


@dataclass(frozen=True)
class QndMeasurement:
    """All outcome blocks of a measurement; their sum is trace preserving."""

    outcomes: tuple[ChoiMatrix, ...]

    def __post_init__(self):
        outs = tuple(self.outcomes)
        if not outs:
            raise ValueError("a measurement needs at least one outcome block")
        if any(c.dim != outs[0].dim for c in outs):
            raise ValueError("outcome blocks must share a dimension")
        object.__setattr__(self, "outcomes", outs)

    @property
    def dim(self) -> int:
        return self.outcomes[0].dim

    def __len__(self) -> int:
        return len(self.outcomes)

    def __getitem__(self, n: int) -> ChoiMatrix:
        return self.outcomes[n]

    def __iter__(self):
        return iter(self.outcomes)

    def povm(self) -> Povm:
        return Povm(tuple(povm_from_choi(c) for c in self.outcomes))

    def total(self) -> ChoiMatrix:
        return ChoiMatrix(self.dim, (), sum(c.psd for c in self.outcomes))

    def tp_residual(self) -> float:
        return float(np.abs(self.total().partial_trace_output() - np.eye(self.dim)).max())

    def is_physical(self, psd_tol: float = ITOL, tp_tol: float = TP_TOL) -> bool:
        psd = all(np.linalg.eigvalsh(herm(c.psd)).min() >= -psd_tol for c in self.outcomes)
        return psd and self.tp_residual() <= tp_tol

    def to_dict(self) -> dict:
        return {"dim": self.dim, "outcomes": [c.to_dict() for c in self.outcomes]}

    @classmethod
    def from_dict(cls, doc: dict) -> "QndMeasurement":
        return cls(tuple(ChoiMatrix.from_dict(c) for c in doc["outcomes"]))


def _check_dim(c: ChoiMatrix, m: np.ndarray, what: str) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.shape != (c.dim, c.dim):
        raise ValueError(f"{what} has shape {m.shape}, expected {(c.dim, c.dim)}")
    return m


def apply_process(c: ChoiMatrix, rho: np.ndarray) -> np.ndarray:
    """Unnormalised conditional state ``E_n(rho)``."""
    rho = _check_dim(c, rho, "state")
    return np.einsum("ikjl,kl->ij", c.tensor, rho)


def povm_from_choi(c: ChoiMatrix) -> np.ndarray:
    """POVM element ``Pi_n`` with ``Tr(Pi_n rho) = Tr(E_n(rho))``."""
    return c.partial_trace_output().T


def adjoint_apply(m: QndMeasurement | ChoiMatrix, o: np.ndarray) -> np.ndarray:
    """Heisenberg-picture image ``E^dagger(o)`` of the summed process."""
    total = m.total() if isinstance(m, QndMeasurement) else m
    o = _check_dim(total, o, "observable")
    # Tr(o E(rho)) = sum o[b, a] T[a, k, b, l] rho[k, l]  =>  E^dagger(o)[l, k]
    return np.einsum("ba,akbl->lk", o, total.tensor)


def superop_tensor(a: ChoiMatrix, b: ChoiMatrix) -> ChoiMatrix:
    """Choi block of the product process ``E_a (x) E_b`` on independent subsystems."""
    da, db = a.dim, b.dim
    t = np.einsum("ikjl,IKJL->iIkKjJlL", a.tensor, b.tensor)
    d = da * db
    return ChoiMatrix(d, a.outcome + b.outcome, t.reshape(d * d, d * d))


def measurement_tensor(a: QndMeasurement, b: QndMeasurement) -> QndMeasurement:
    """Outcome-wise ``superop_tensor``; outcome ``(n, m)`` sits at index ``len(b) * n + m``."""
    return QndMeasurement(tuple(superop_tensor(x, y) for x, y in itertools.product(a, b)))


def ideal_choi(n: int | Sequence[int], d: int) -> ChoiMatrix:
    """Projective-measurement block ``|nn><nn|`` for basis state ``n``."""
    nb = n_qubits(d)
    if isinstance(n, (int, np.integer)):
        index = int(n)
        label = bits(index, nb)
    else:
        label = tuple(int(x) for x in n)
        if len(label) != nb:
            raise ValueError(f"label {label} does not match dimension {d}")
        index = bits_to_index(label)
    if not 0 <= index < d:
        raise ValueError(f"outcome {n} out of range for dimension {d}")
    psd = np.zeros((d * d, d * d), dtype=complex)
    psd[index * d + index, index * d + index] = 1.0
    return ChoiMatrix(d, label, psd)


def ideal_measurement(d: int) -> QndMeasurement:
    return QndMeasurement(tuple(ideal_choi(n, d) for n in range(d)))


def unitary_choi(u: np.ndarray) -> ChoiMatrix:
    u = np.asarray(u, dtype=complex)
    return ChoiMatrix.from_map(lambda x: u @ x @ dagger(u), u.shape[0])


def compose(after: ChoiMatrix, before: ChoiMatrix) -> ChoiMatrix:
    """Choi block of ``after o before``; the outcome label is taken from ``before``."""
    if after.dim != before.dim:
        raise ValueError("cannot compose processes of different dimension")
    lv = after.liouville @ before.liouville
    return ChoiMatrix.from_liouville(before.dim, before.outcome or after.outcome, lv)


def depolarize(c: ChoiMatrix, p: float) -> ChoiMatrix:
    """``(1-p) E + p Tr(E(.)) I/d``."""
    d = c.dim
    mixed = ChoiMatrix.from_map(lambda x: np.trace(apply_process(c, x)) * np.eye(d) / d, d)
    return c.with_psd((1 - p) * c.psd + p * mixed.psd)


def process_fidelity(c: ChoiMatrix, u: np.ndarray) -> float:
    """Overlap of a trace-preserving process with the unitary ``u``."""
    d = c.dim
    psi = np.asarray(u, dtype=complex).reshape(-1)  # sum_k U|k> (x) |k>
    return float(np.real(np.vdot(psi, c.psd @ psi)) / d ** 2)


def liouville_kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Liouville matrix of ``A (x) B`` from the factors' Liouville matrices."""
    da = int(round(np.sqrt(a.shape[0])))
    db = int(round(np.sqrt(b.shape[0])))
    ta = a.reshape(da, da, da, da)
    tb = b.reshape(db, db, db, db)
    t = np.einsum("ijkl,IJKL->iIjJkKlL", ta, tb)
    d = da * db
    return t.reshape(d * d, d * d)


def apply_liouville(lv: np.ndarray, rho: np.ndarray) -> np.ndarray:
    d = rho.shape[0]
    return (lv @ rho.reshape(-1)).reshape(d, d)


def adjoint_liouville(lv: np.ndarray, o: np.ndarray) -> np.ndarray:
    d = o.shape[0]
    return (dagger(lv) @ o.reshape(-1)).reshape(d, d)


def to_measurement(blocks: Iterable[np.ndarray], dim: int) -> QndMeasurement:
    """Wrap PSD-ordered arrays as a measurement with bit-string labels."""
    blocks = list(blocks)
    nb = n_qubits(len(blocks)) if len(blocks) > 1 else 0
    return QndMeasurement(tuple(ChoiMatrix(dim, bits(n, nb), b) for n, b in enumerate(blocks)))


def povm_tensor(a: Povm, b: Povm) -> Povm:
    return Povm(tuple(kron(x, y) for x, y in itertools.product(a, b)))
