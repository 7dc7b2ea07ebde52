"""Single-qubit gate set tomography by maximum likelihood."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize

from ..channels import ChoiMatrix, Povm, apply_liouville, unitary_choi
from ..circuits import GST_LABELS, NATIVE_GATES, PREP_GATES, ROTATION_GATES
from ..counts import CountsTable
from ..linalg import PAULIS, dagger, herm, is_psd
from .optimizer import FitResult, OptimizerConfig, log_likelihood, maximize
from .params import ChoiParam, DensityParam, PovmParam

ZERO = np.diag([1.0, 0.0]).astype(complex)
N_GST_PARAMS = 4 + 2 * 4 + len(GST_LABELS) * 16


def _choi_to_lv(psd: np.ndarray) -> np.ndarray:
    return psd.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)


# the index shuffle is an involution
_lv_to_choi = _choi_to_lv


@dataclass(frozen=True)
class GstEstimate:
    rho: np.ndarray = field(repr=False)
    gates: dict = field(repr=False)  # native label -> trace-preserving ChoiMatrix
    povm: Povm = field(repr=False)
    objective: float = float("nan")

    @classmethod
    def ideal(cls) -> "GstEstimate":
        gates = {g: unitary_choi(NATIVE_GATES[g].unitary) for g in GST_LABELS}
        return cls(ZERO.copy(), gates, Povm((ZERO.copy(), np.diag([0.0, 1.0]).astype(complex))))

    def liouville(self, label: str) -> np.ndarray:
        return self.gates[label].liouville

    def compiled(self, natives) -> np.ndarray:
        lv = np.eye(4, dtype=complex)
        for g in natives:
            lv = self.liouville(g) @ lv
        return lv

    def prep_state(self, v_label: str) -> np.ndarray:
        return apply_liouville(self.compiled(PREP_GATES[v_label].native), self.rho)

    def rotation(self, u_label: str) -> np.ndarray:
        return self.compiled(ROTATION_GATES[u_label].native)

    def probabilities(self) -> np.ndarray:
        """Model ``q[i, j, k, l] = Tr(Pi_l F_k F_j F_i(rho))``."""
        lvs = [self.liouville(g) for g in GST_LABELS]
        r = self.rho.reshape(-1)
        pis = np.array([e.reshape(-1) for e in self.povm])
        out = np.empty((4, 4, 4, 2))
        for i, j, k in itertools.product(range(4), repeat=3):
            s = lvs[k] @ lvs[j] @ lvs[i] @ r
            out[i, j, k] = np.real(np.conj(pis) @ s)
        return out

    def is_physical(self, tol: float = 1e-6) -> bool:
        ok = is_psd(self.rho) and abs(np.trace(self.rho) - 1) < 1e-8 and self.povm.is_valid()
        for c in self.gates.values():
            ok = ok and c.is_psd and np.abs(c.partial_trace_output() - np.eye(2)).max() < tol
        return bool(ok)

    def to_dict(self) -> dict:
        return {
            "rho": [[[float(z.real), float(z.imag)] for z in row] for row in self.rho],
            "gates": {k: c.to_dict() for k, c in self.gates.items()},
            "povm": self.povm.to_dict(),
            "objective": self.objective,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GstEstimate":
        arr = np.asarray(doc["rho"], dtype=float)
        return cls(arr[..., 0] + 1j * arr[..., 1], {k: ChoiMatrix.from_dict(v) for k, v in doc["gates"].items()},
                   Povm.from_dict(doc["povm"]), float(doc.get("objective", float("nan"))))


class GstModel:
    """Parameter vector ``[rho (4) | POVM (8) | gates (4 x 16)]``."""

    def __init__(self):
        self.rho_p = DensityParam(2)
        self.povm_p = PovmParam(2, 2)
        self.gate_p = ChoiParam(2)
        self.size = N_GST_PARAMS

    def _slices(self, x):
        return x[:4], x[4:12], [x[12 + 16 * g:28 + 16 * g] for g in range(len(GST_LABELS))]

    def build(self, x: np.ndarray):
        xr, xp, xg = self._slices(x)
        rho, rho_vjp = self.rho_p.build(xr)
        povm, povm_vjp = self.povm_p.build(xp)
        gates = [self.gate_p.build(v) for v in xg]
        return rho, povm, gates, rho_vjp, povm_vjp

    def estimate(self, x: np.ndarray, objective: float = float("nan")) -> GstEstimate:
        rho, povm, gates, _, _ = self.build(x)
        return GstEstimate(
            herm(rho), {g: ChoiMatrix(2, (), herm(c)) for g, (c, _) in zip(GST_LABELS, gates)},
            Povm(tuple(herm(e) for e in povm)), objective,
        )

    def params_from(self, est: GstEstimate, mix: float = 0.05) -> np.ndarray:
        parts = [self.rho_p.init(est.rho, mix), self.povm_p.init(list(est.povm), mix)]
        parts += [self.gate_p.init(est.gates[g].psd, mix) for g in GST_LABELS]
        return np.concatenate(parts)

    def loglik(self, x: np.ndarray, counts: np.ndarray):
        rho, povm, gates, rho_vjp, povm_vjp = self.build(x)
        lvs = np.array([_choi_to_lv(c) for c, _ in gates])
        r = rho.reshape(-1)
        pis = np.array([e.reshape(-1) for e in povm])
        s1 = lvs @ r  # [i]
        s2 = np.einsum("jab,ib->ija", lvs, s1)
        s3 = np.einsum("kab,ijb->ijka", lvs, s2)
        q = np.real(np.einsum("la,ijka->ijkl", np.conj(pis), s3))
        value, w = log_likelihood(counts, q)

        # backward pass through the Liouville products
        g_pi = np.einsum("ijkl,ijka->la", w, s3)
        a3 = np.einsum("ijkl,la->ijka", w, pis)
        g_lv = np.einsum("ijka,ijb->kab", a3, np.conj(s2))
        a2 = np.einsum("kba,ijkb->ija", np.conj(lvs), a3)
        g_lv += np.einsum("ija,ib->jab", a2, np.conj(s1))
        a1 = np.einsum("jba,ijb->ia", np.conj(lvs), a2)
        g_lv += np.einsum("ia,b->iab", a1, np.conj(r))
        a0 = np.einsum("iba,ib->a", np.conj(lvs), a1)

        grad = [rho_vjp(herm(a0.reshape(2, 2))), povm_vjp([herm(g.reshape(2, 2)) for g in g_pi])]
        grad += [vjp(herm(_lv_to_choi(g))) for (_, vjp), g in zip(gates, g_lv)]
        return value, np.concatenate(grad)


    def penalty(self, x: np.ndarray):
        """Gate non-unitarity plus ``||rho - |0><0| ||^2``, with the gradient."""
        value, grad = self.nonunitarity(x)
        rho, rho_vjp = self.rho_p.build(x[:4])
        dev = rho - ZERO
        grad[:4] += rho_vjp(2 * dev)
        return value + float(np.linalg.norm(dev) ** 2), grad

    def nonunitarity(self, x: np.ndarray):
        """``sum_g ||L_g^dagger L_g - I||^2`` over the gate Liouville matrices, with its gradient."""
        _, _, xg = self._slices(x)
        value = 0.0
        grad = [np.zeros(12)]
        for v in xg:
            c, vjp = self.gate_p.build(v)
            lv = _choi_to_lv(c)
            dev = dagger(lv) @ lv - np.eye(4)
            value += float(np.linalg.norm(dev) ** 2)
            grad.append(vjp(herm(_lv_to_choi(4 * lv @ dev))))
        return value, np.concatenate(grad)


def gst_counts(counts, qubit: int = 0) -> np.ndarray:
    if isinstance(counts, CountsTable):
        return counts.gst(qubit).astype(float)
    arr = np.asarray(counts, dtype=float)
    if arr.shape != (4, 4, 4, 2):
        raise ValueError(f"GST counts need shape (4, 4, 4, 2), got {arr.shape}")
    return arr


# gauge fixing --------------------------------------------------------------

def _unitary_lv(theta: np.ndarray) -> np.ndarray:
    u = expm(-0.5j * sum(t * p for t, p in zip(theta, PAULIS[1:])))
    return np.kron(u, np.conj(u))


def _scale_lv(lam: float) -> np.ndarray:
    vi = np.eye(2).reshape(-1)
    return lam * np.eye(4) + (1 - lam) * np.outer(vi / 2, vi)


def _transform(est: GstEstimate, b: np.ndarray):
    binv = np.linalg.inv(b)
    rho = apply_liouville(b, est.rho)
    gates = {g: b @ est.liouville(g) @ binv for g in GST_LABELS}
    povm = [(np.conj(binv).T @ e.reshape(-1)).reshape(2, 2) for e in est.povm]
    return rho, gates, povm


def _min_eig(est: GstEstimate, lam: float) -> float:
    rho, gates, povm = _transform(est, _scale_lv(lam))
    eigs = [np.linalg.eigvalsh(herm(rho))[0]] + [np.linalg.eigvalsh(herm(e))[0] for e in povm]
    eigs += [np.linalg.eigvalsh(herm(_lv_to_choi(lv)))[0] / 2 for lv in gates.values()]
    return float(min(eigs))


def _lambda_interval(est: GstEstimate, tol: float = 1e-10) -> tuple[float, float]:
    base = min(_min_eig(est, 1.0), 0.0) - tol

    def ok(lam):
        return _min_eig(est, lam) >= base

    bounds = []
    for far in (0.5, 2.0):
        if ok(far):
            bounds.append(far)
            continue
        inner, outer = 1.0, far
        for _ in range(50):
            mid = 0.5 * (inner + outer)
            inner, outer = (mid, outer) if ok(mid) else (inner, mid)
        bounds.append(inner)
    return bounds[0], bounds[1]


def gauge_fix(est: GstEstimate) -> GstEstimate:
    """Move an estimate along its gauge orbit towards the ideal gate set.

    The gauge group searched is a qubit rotation composed with a Bloch-ball
    rescaling, restricted to the range where every object stays physical.
    The target is the ideal gate set with the state ``|0><0|``, which also
    settles how state impurity and readout error are split.
    """
    ideal = GstEstimate.ideal()
    ideal_lv = {g: ideal.liouville(g) for g in GST_LABELS}
    lo, hi = _lambda_interval(est)

    def cost(v):
        b = _scale_lv(v[3]) @ _unitary_lv(v[:3])
        rho, gates, _ = _transform(est, b)
        c = sum(np.linalg.norm(gates[g] - ideal_lv[g]) ** 2 for g in GST_LABELS)
        return float(c + np.linalg.norm(rho - ZERO) ** 2)

    res = minimize(cost, np.array([0.0, 0.0, 0.0, 1.0]), method="L-BFGS-B",
                   bounds=[(-np.pi, np.pi)] * 3 + [(lo, hi)])
    v = res.x if res.fun <= cost(np.array([0.0, 0.0, 0.0, 1.0])) else np.array([0.0, 0.0, 0.0, 1.0])
    rho, gates, povm = _transform(est, _scale_lv(v[3]) @ _unitary_lv(v[:3]))
    return GstEstimate(
        herm(rho) / np.trace(rho).real,
        {g: ChoiMatrix(2, (), herm(_lv_to_choi(gates[g]))) for g in GST_LABELS},
        Povm(tuple(herm(e) for e in povm)),
        est.objective,
    )


def gst_mle(counts, cfg: OptimizerConfig | None = None, qubit: int = 0, init: GstEstimate | None = None,
            problem_id: str | None = None, gauge: bool = True) -> tuple[GstEstimate, FitResult]:
    """Maximum-likelihood state, gates and POVM from the 64 GST circuits of one qubit.

    Every circuit holds three gates, so an isotropic Bloch contraction can be
    traded between the gates, the state and the readout at almost no cost in
    likelihood. With ``gauge`` set, a penalty of weight
    ``cfg.gst_regularization`` per shot on gate non-unitarity and on the
    distance of the state from ``|0><0|`` picks unitary gates and a pure state
    from that family, and the result is then gauge-fixed. ``objective`` is the
    plain log-likelihood; ``history`` follows the penalised one.
    """
    cfg = cfg or OptimizerConfig()
    data = gst_counts(counts, qubit)
    model = GstModel()
    x0 = model.params_from(init or GstEstimate.ideal())
    pid = problem_id or f"gst:q{qubit}"
    total = max(data.sum(), 1.0)
    kappa = cfg.gst_regularization * total if gauge else 0.0

    def objective(x):
        value, grad = model.loglik(x, data)
        if kappa:
            pen, pgrad = model.penalty(x)
            value, grad = value - kappa * pen, grad - kappa * pgrad
        return value, grad

    fit = maximize(objective, x0, cfg, cfg.rng(pid), scale=total)
    fit.objective = model.loglik(fit.x, data)[0]
    est = model.estimate(fit.x, fit.objective)
    if gauge:
        est = gauge_fix(est)
    return est, fit


__all__ = ["GstEstimate", "GstModel", "N_GST_PARAMS", "gauge_fix", "gst_counts", "gst_mle"]
