"""Figures of merit of reconstructed measurements.

``F`` only needs the POVM; ``Q``, ``D`` and the flip probabilities read the
Choi blocks. The correlation measures compare a two-qubit reconstruction
against the tensor product of single-qubit ones.
"""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channels import (
    ChoiMatrix,
    Povm,
    QndMeasurement,
    adjoint_apply,
    bits,
    bits_to_index,
    label_str,
    n_qubits,
    superop_tensor,
)
from .counts import target_id
from .linalg import dagger, kron, operator_norm

IMAG_TOL = 1e-6


def fidelity(p: Povm) -> float:
    """Mean probability of reading ``n`` from the basis state ``|n>``."""
    return float(np.mean([np.real(e[n, n]) for n, e in enumerate(p)]))


def qndness(m: QndMeasurement) -> float:
    """Mean probability that ``|n>`` is read as ``n`` and left in ``|n>``."""
    return float(np.mean([np.real(c.element(n, n, n, n)) for n, c in enumerate(m)]))


def readout_observable(d: int) -> np.ndarray:
    return np.diag(np.arange(d, dtype=float)).astype(complex)


def _check_observable(o: np.ndarray, d: int) -> None:
    o = np.asarray(o)
    if o.shape != (d, d):
        raise ValueError(f"observable has shape {o.shape}, expected {(d, d)}")
    if not np.allclose(o, np.diag(np.diag(o)), atol=1e-12):
        raise ValueError("readout observable must be diagonal in the computational basis")
    diag = np.real(np.diag(o))
    if np.min(np.abs(diag[:, None] - diag[None, :]) + np.eye(d)) < 1e-12:
        raise ValueError("degenerate readout observable: its compatible set is not the diagonal matrices")


def destructiveness(m: QndMeasurement, observable: np.ndarray | None = None) -> float:
    """Largest half-change ``||O_c - E^dagger(O_c)|| / 2`` over compatible unit-norm ``O_c``.

    For a nondegenerate diagonal observable the compatible ``O_c`` are the
    real diagonal matrices. The objective is convex and the unit ball is the
    cube of diagonals, so the maximum sits on a sign vector; ``s`` and ``-s``
    give the same value, which leaves ``2^(d-1)`` candidates.
    """
    d = m.dim
    _check_observable(readout_observable(d) if observable is None else observable, d)
    best = 0.0
    for tail in itertools.product((1.0, -1.0), repeat=d - 1):
        oc = np.diag((1.0,) + tail).astype(complex)
        best = max(best, 0.5 * operator_norm(oc - adjoint_apply(m, oc)))
    return best


def _label(x, nb: int) -> tuple[int, ...]:
    if isinstance(x, (int, np.integer)):
        return bits(int(x), nb)
    return tuple(int(b) for b in x)


def flip_probability(m: QndMeasurement, n, a, b) -> float:
    """``<bb|Y_n|aa>``: probability of outcome ``n`` taking ``|a>`` to ``|b>``.

    Labels are basis indices or bit tuples.
    """
    d = m.dim
    nb = n_qubits(d)
    idx = [bits_to_index(_label(x, nb)) for x in (n, a, b)]
    if any(not 0 <= i < d for i in idx) or idx[0] >= len(m):
        raise ValueError(f"labels {(n, a, b)} out of range for dimension {d}")
    ni, ai, bi = idx
    z = m[ni].element(bi, bi, ai, ai)
    if abs(z.imag) > IMAG_TOL:
        raise ValueError(f"flip probability has imaginary part {z.imag:.2e}")
    return float(z.real)


def flip_key(n, a, b, nb: int) -> str:
    return f"{label_str(_label(n, nb))}:{label_str(_label(a, nb))}->{label_str(_label(b, nb))}"


def flip_table(m: QndMeasurement) -> dict[str, float]:
    d = m.dim
    nb = n_qubits(d)
    return {flip_key(n, a, b, nb): flip_probability(m, n, a, b)
            for n in range(d) for a in range(d) for b in range(d)}


def povm_correlation(joint: Povm, marg_a: Povm, marg_b: Povm) -> float:
    """Distance of a joint POVM from the product of its single-qubit counterparts.

    Frobenius norms of the elementwise differences, combined as a root sum
    of squares and divided by 8.
    """
    if joint.dim != 4 or marg_a.dim != 2 or marg_b.dim != 2 or len(joint) != len(marg_a) * len(marg_b):
        raise ValueError("povm_correlation expects a 4-outcome two-qubit POVM and two single-qubit POVMs")
    total = sum(np.linalg.norm(kron(pa, pb) - joint[i]) ** 2
                for i, (pa, pb) in enumerate(itertools.product(marg_a, marg_b)))
    return float(np.sqrt(total) / 8)


def choi_correlation(joint: QndMeasurement, marg_a: QndMeasurement, marg_b: QndMeasurement) -> float:
    """Same comparison for Choi blocks, with the superoperator tensor product, divided by 32."""
    if joint.dim != 4 or marg_a.dim != 2 or marg_b.dim != 2 or len(joint) != len(marg_a) * len(marg_b):
        raise ValueError("choi_correlation expects a two-qubit measurement and two single-qubit ones")
    total = sum(np.linalg.norm(superop_tensor(ca, cb).psd - joint[i].psd) ** 2
                for i, (ca, cb) in enumerate(itertools.product(marg_a, marg_b)))
    return float(np.sqrt(total) / 32)


def bell_states() -> np.ndarray:
    """Rows ``|B_nm>``: ``00 -> Phi+``, ``01 -> Psi+``, ``10 -> Phi-``, ``11 -> Psi-``."""
    s = 1 / np.sqrt(2)
    return np.array([[s, 0, 0, s], [0, s, s, 0], [s, 0, 0, -s], [0, s, -s, 0]], dtype=complex)


def bell_measurement() -> QndMeasurement:
    """Projective Bell measurement leaving the pair in the detected Bell state."""
    blocks = []
    for n, v in enumerate(bell_states()):
        p = np.outer(v, v.conj())
        blocks.append(ChoiMatrix.from_map(lambda x, p=p: p @ x @ dagger(p), 4, bits(n, 2)))
    return QndMeasurement(tuple(blocks))


@dataclass
class QualityReport:
    """Quantifiers of one qubit or one connected pair."""

    target: str
    fidelity: float
    qndness: float
    destructiveness: float
    flip_probabilities: dict[str, float] = field(default_factory=dict)
    povm_correlation: float | None = None
    choi_correlation: float | None = None
    std: dict[str, float] = field(default_factory=dict)

    @property
    def arithmetic_mean(self) -> float:
        return (self.fidelity + self.qndness + 1.0 - self.destructiveness) / 3.0

    def scalars(self) -> dict[str, float]:
        out = {"F": self.fidelity, "Q": self.qndness, "D": self.destructiveness, "mean": self.arithmetic_mean}
        if self.povm_correlation is not None:
            out["C_povm"] = self.povm_correlation
        if self.choi_correlation is not None:
            out["C_choi"] = self.choi_correlation
        return out

    def to_dict(self) -> dict:
        doc = {"target": self.target, **self.scalars(), "flip_probabilities": dict(self.flip_probabilities)}
        if self.std:
            doc["std"] = dict(self.std)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "QualityReport":
        return cls(doc["target"], doc["F"], doc["Q"], doc["D"], dict(doc.get("flip_probabilities", {})),
                   doc.get("C_povm"), doc.get("C_choi"), dict(doc.get("std", {})))


CSV_COLUMNS = ("target", "F", "Q", "D", "mean", "C_povm", "C_choi",
               "F_std", "Q_std", "D_std", "mean_std", "C_povm_std", "C_choi_std")


def reports_csv(reports: Sequence[QualityReport]) -> str:
    """One row per qubit or edge; missing values are empty cells."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        vals = r.scalars()
        row = [r.target]
        for col in CSV_COLUMNS[1:]:
            v = r.std.get(col[:-4]) if col.endswith("_std") else vals.get(col)
            row.append("" if v is None else repr(float(v)))
        w.writerow(row)
    return buf.getvalue()


def quality_report(target: str, m: QndMeasurement, povm: Povm | None = None,
                   marginals: tuple[QndMeasurement, QndMeasurement] | None = None,
                   marginal_povms: tuple[Povm, Povm] | None = None,
                   joint_povm: Povm | None = None) -> QualityReport:
    """Quantifiers of ``m``; ``F`` uses ``povm`` when given (the tomographic POVM)."""
    rep = QualityReport(target, fidelity(povm if povm is not None else m.povm()), qndness(m),
                        destructiveness(m), flip_table(m))
    if marginals is not None:
        rep.choi_correlation = choi_correlation(m, *marginals)
    if marginal_povms is not None:
        rep.povm_correlation = povm_correlation(joint_povm if joint_povm is not None else m.povm(), *marginal_povms)
    return rep


def assess(estimates) -> list[QualityReport]:
    """Reports for every qubit and edge of an estimate set, qubits first.

    Single-qubit ``F`` uses the GST POVM; edge ``F`` uses the joint POVM, and
    the correlations compare against the single-qubit reconstructions.
    """
    out = [quality_report(target_id(q), m, povm=estimates.gst[q].povm) for q, m in sorted(estimates.qubits.items())]
    for e, m in sorted(estimates.edges.items()):
        a, b = e
        out.append(quality_report(
            target_id(e), m, povm=estimates.edge_povms[e],
            marginals=(estimates.qubits[a], estimates.qubits[b]),
            marginal_povms=(estimates.gst[a].povm, estimates.gst[b].povm),
            joint_povm=estimates.edge_povms[e],
        ))
    return out


def quantities(reports: Sequence[QualityReport]) -> dict[str, float]:
    """Flat ``{"F[0]": ..., "p[0-1]01:01->00": ...}`` view used for error bars."""
    out = {}
    for r in reports:
        for k, v in r.scalars().items():
            out[f"{k}[{r.target}]"] = v
        for k, v in r.flip_probabilities.items():
            out[f"p[{r.target}]{k}"] = v
    return out


__all__ = [
    "CSV_COLUMNS",
    "assess",
    "quantities",
    "QualityReport",
    "bell_measurement",
    "bell_states",
    "choi_correlation",
    "destructiveness",
    "fidelity",
    "flip_key",
    "flip_probability",
    "flip_table",
    "povm_correlation",
    "quality_report",
    "readout_observable",
    "reports_csv",
]
