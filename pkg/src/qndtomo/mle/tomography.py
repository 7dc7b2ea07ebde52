"""Measurement tomography: POVM and per-outcome Choi reconstructions."""
from __future__ import annotations

import itertools

import numpy as np

from ..channels import ChoiMatrix, Povm, adjoint_liouville, ideal_choi, liouville_kron
from ..circuits import PREP_LABELS, ROTATION_LABELS
from ..counts import CountsTable
from ..linalg import herm
from .gst import GstEstimate
from .design import ChoiDesign
from .interior import solve_choi_interior
from .optimizer import FitResult, OptimizerConfig, log_likelihood, maximize
from .params import FreePsdParam, PovmParam, ptrace_out


# experiment design ----------------------------------------------------------

def prep_states(gsts: list[GstEstimate]) -> np.ndarray:
    """States ``F_V(rho)`` for every V label tuple, in ``itertools.product`` order."""
    per_qubit = [[g.prep_state(v) for v in PREP_LABELS] for g in gsts]
    out = []
    for combo in itertools.product(*per_qubit):
        s = np.ones((1, 1), dtype=complex)
        for r in combo:
            s = np.kron(s, r)
        out.append(s)
    return np.array(out)


def rotation_liouvilles(gsts: list[GstEstimate]) -> list[np.ndarray]:
    per_qubit = [[g.rotation(u) for u in ROTATION_LABELS] for g in gsts]
    out = []
    for combo in itertools.product(*per_qubit):
        lv = combo[0]
        for nxt in combo[1:]:
            lv = liouville_kron(lv, nxt)
        out.append(lv)
    return out


def heisenberg_effects(rotations: list[np.ndarray], final: Povm) -> np.ndarray:
    """``E[u, m] = F_u^dagger(Pi_m)``."""
    return np.array([[adjoint_liouville(lv, e) for e in final] for lv in rotations])


def qndmt_counts(counts, target) -> np.ndarray:
    if isinstance(counts, CountsTable):
        return counts.qndmt(target).astype(float)
    return np.asarray(counts, dtype=float)


# POVM ------------------------------------------------------------------------

def povm_loglik(elems, states: np.ndarray, counts: np.ndarray):
    """``sum c[v, n] log Tr(Pi_n rho_v)`` and its gradient per element."""
    q = np.real(np.einsum("nab,vba->vn", np.array(elems), states))
    value, w = log_likelihood(counts, q)
    grads = [herm(np.einsum("v,vab->ab", w[:, n], states)) for n in range(len(elems))]
    return value, grads


def povm_mle(counts: np.ndarray, states: np.ndarray, cfg: OptimizerConfig | None = None,
             init: Povm | None = None, problem_id: str = "povm") -> tuple[Povm, FitResult]:
    """Maximum-likelihood POVM from first-outcome counts ``c[v, n]`` on known states."""
    cfg = cfg or OptimizerConfig()
    counts = np.asarray(counts, dtype=float)
    n_out, dim = counts.shape[1], states.shape[1]
    param = PovmParam(dim, n_out)
    if init is None:
        init = Povm(tuple(np.diag(np.eye(dim)[n]).astype(complex) for n in range(n_out)))
    elif len(init) != n_out or init.dim != dim or not init.is_valid():
        # infeasible start: fall back to the uninformative POVM
        init = Povm(tuple(np.eye(dim, dtype=complex) / n_out for _ in range(n_out)))

    def fun(x):
        elems, vjp = param.build(x)
        value, grads = povm_loglik(elems, states, counts)
        return value, vjp(grads)

    fit = maximize(fun, param.init(list(init)), cfg, cfg.rng(problem_id), scale=max(counts.sum(), 1.0))
    elems, _ = param.build(fit.x)
    return Povm(tuple(herm(e) for e in elems)), fit


# Choi ------------------------------------------------------------------------

def choi_design(states: np.ndarray, effects: np.ndarray) -> np.ndarray:
    """Operators ``X[v, u, m] = E[u, m] (x) rho_v^T`` with ``q = Tr(X Yt)``."""
    nv, d = states.shape[0], states.shape[1]
    nu, nm = effects.shape[:2]
    x = np.einsum("umab,vcd->vumacbd", effects, np.transpose(states, (0, 2, 1)))
    return x.reshape(nv, nu, nm, d * d, d * d)


def choi_loglik(choi: np.ndarray, design: np.ndarray, counts: np.ndarray):
    n = design.shape[-1]
    flat = design.reshape(-1, n * n)
    q = np.real(flat @ choi.T.reshape(-1))  # Tr(X Yt) = vec(X) . vec(Yt^T)
    value, w = log_likelihood(np.reshape(counts, -1), q)
    return value, herm((w @ flat).reshape(n, n))


def choi_mle(counts: np.ndarray, pi: np.ndarray, states: np.ndarray, effects: np.ndarray,
             outcome: tuple[int, ...], cfg: OptimizerConfig | None = None, init: ChoiMatrix | None = None,
             problem_id: str = "choi", mix: float = 0.05) -> tuple[ChoiMatrix, FitResult]:
    """Maximum-likelihood Choi block of one first outcome, its POVM element pinned to ``pi``.

    ``counts[v, u, m]`` are the joint counts with the first outcome fixed.
    The exact path is a barrier method that starts from the analytic centre of
    the feasible set; ``init`` and ``mix`` seed the penalty path only.
    """
    cfg = cfg or OptimizerConfig()
    counts = np.asarray(counts, dtype=float)
    dim = states.shape[1]
    design = ChoiDesign(states, effects)
    total = max(counts.sum(), 1.0)
    start = init.psd if init is not None else ideal_choi(outcome, dim).psd
    rng = cfg.rng(problem_id)

    if cfg.choi_constraint == "exact":
        choi, fit = solve_choi_interior(design, counts, np.asarray(pi).T, cfg)
        fit.constraint_residual = float(np.abs(ptrace_out(choi, dim) - np.asarray(pi).T).max())
        return ChoiMatrix(dim, outcome, herm(choi)), fit

    param = FreePsdParam(dim * dim)
    target = np.asarray(pi).T
    x = param.init(start * (np.trace(pi).real / max(np.trace(start).real, 1e-12)), mix)
    mu = 10.0
    history: list[float] = []
    iterations = 0
    for _ in range(80):
        def fun(x, mu=mu):
            a, vjp = param.build(x)
            value, g = design.loglik(a, counts)
            dev = ptrace_out(a, dim) - target
            value -= total * mu * float(np.real(np.sum(np.abs(dev) ** 2)))
            g = g - total * mu * 2 * np.kron(np.eye(dim), herm(dev))
            return value, vjp(g)

        fit = maximize(fun, x, cfg, rng, scale=total)
        history += fit.history
        iterations += fit.iterations
        x = fit.x
        a, _ = param.build(x)
        residual = float(np.abs(ptrace_out(a, dim) - target).max())
        if residual < cfg.constraint_tolerance:
            break
        mu *= 2.0
    fit.history, fit.iterations = history, iterations
    fit.objective = design.loglik(a, counts)[0]
    fit.constraint_residual = residual
    if residual >= cfg.constraint_tolerance:
        fit.converged = False
        fit.message = f"constraint residual {residual:.2e} above tolerance"
    return ChoiMatrix(dim, outcome, herm(a)), fit


__all__ = [
    "ChoiDesign",
    "choi_design",
    "choi_loglik",
    "choi_mle",
    "heisenberg_effects",
    "povm_loglik",
    "povm_mle",
    "prep_states",
    "qndmt_counts",
    "rotation_liouvilles",
]
