"""Log-barrier Newton solver for the Choi-block likelihood.

With the POVM element of a block fixed, the Choi likelihood is concave over
a convex set: ``Yt >= 0`` on the affine slice ``Tr_out Yt = Pi^T``. Writing
``Pi^T = V V^dagger`` on its support, every feasible point is
``(I (x) V) Phi (I (x) V)^dagger`` with ``Tr_out Phi = I``, so the slice is
``Phi = I/d + sum_j y_j B_j`` with ``B_j`` spanning Hermitian operators of
vanishing output partial trace. Newton steps on the barrier problem stay
strictly inside the cone and meet the equality constraint exactly.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import LinAlgError, blas, cho_factor, cho_solve

from ..linalg import dagger, herm, hermitian_basis
from .design import ChoiDesign
from .optimizer import FitResult, OptimizerConfig, log_likelihood


def _support_factor(q: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    evals, vecs = np.linalg.eigh(herm(q))
    keep = evals > rtol * max(evals[-1], 1.0)
    return vecs[:, keep] * np.sqrt(evals[keep])


def _chol(m: np.ndarray):
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        return None


def solve_choi_interior(design: ChoiDesign, counts: np.ndarray, marginal: np.ndarray, cfg: OptimizerConfig,
                        gap: float = 1e-4, shrink: float = 30.0):
    """Maximise ``sum c log Tr(X Yt)`` over PSD ``Yt`` with ``Tr_out Yt = marginal``.

    The barrier weight shrinks by ``shrink`` per stage until the duality gap
    bound is below ``gap`` log-likelihood units; ``cfg.max_iterations`` caps
    the total number of Newton steps. ``history`` holds the log-likelihood at
    the end of each centering stage.
    """
    max_newton = cfg.max_iterations
    d = design.d_out
    counts = np.ravel(np.asarray(counts, dtype=float))
    total = max(counts.sum(), 1.0)
    v = _support_factor(marginal)
    r = v.shape[1]
    if r == 0:
        zero = np.zeros((d * design.d_in,) * 2, dtype=complex)
        return zero, FitResult(np.zeros(0), 0.0, 0, True, 0.0, message="empty support")

    # reduced problem on the support of the marginal
    states = v.T[None] @ design.states @ v.conj()[None]
    red = ChoiDesign(states, design.effects)
    n = d * r
    basis = np.einsum("aij,bkl->abikjl", hermitian_basis(d, traceless=True), hermitian_basis(r))
    basis = basis.reshape(-1, n, n)
    keep = counts > 0
    c = counts[keep]
    a = np.asfortranarray(red.probs_batch(basis).reshape(len(basis), -1).T[keep])
    phi0 = np.eye(n, dtype=complex) / d
    q0 = red.probs(phi0)[keep]
    bflat = basis.reshape(len(basis), -1)

    def phi_of(y):
        return phi0 + np.tensordot(y, basis, axes=1)

    def barrier_obj(y, mu):
        phi = phi_of(y)
        low = _chol(phi)
        q = q0 + a @ y
        if low is None or np.any(q <= 0):
            return np.inf, None, None
        logdet = 2 * np.sum(np.log(np.real(np.diag(low))))
        return -np.sum(c * np.log(q)) / total - mu * logdet, low, q

    y = np.zeros(len(basis))
    mu = 1.0
    history: list[float] = []
    newton = 0
    converged = False
    while newton < max_newton:
        f, low, q = barrier_obj(y, mu)
        # centering
        while newton < max_newton:
            linv = np.linalg.inv(low)
            pinv = dagger(linv) @ linv
            m = (linv[None] @ basis @ dagger(linv)[None]).reshape(len(basis), -1)
            m = np.concatenate([m.real, m.imag], axis=1)
            w = c / q
            sa = a * (np.sqrt(c) / q)[:, None]
            grad = -(a.T @ w) / total - mu * np.real(bflat @ pinv.T.reshape(-1))
            hess = blas.dsyrk(1.0 / total, sa, trans=1, c=mu * (m @ m.T), beta=1.0, lower=0)
            try:
                step = -cho_solve(cho_factor(hess, check_finite=False), grad, check_finite=False)
            except LinAlgError:
                hess = np.triu(hess) + np.triu(hess, 1).T
                step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
            dec = -grad @ step
            newton += 1
            if dec / mu < 1e-8:
                break
            t = 1.0
            while True:
                f_new, low_new, q_new = barrier_obj(y + t * step, mu)
                if f_new <= f - 0.25 * t * dec:
                    break
                t *= 0.5
                if t < 1e-12:
                    break
            if t < 1e-12:
                break
            y, f, low, q = y + t * step, f_new, low_new, q_new
            if dec / mu < 1e-1:
                break
        history.append(float(np.sum(c * np.log(q))))
        if n * mu * total <= gap:
            converged = True
            break
        mu /= shrink

    phi = herm(phi_of(y))
    lift = np.kron(np.eye(d), v)
    choi = herm(lift @ phi @ dagger(lift))
    value, _ = log_likelihood(counts, design.probs(choi))
    gnorm = float(n * mu)  # duality-gap bound per shot
    msg = "duality gap below tolerance" if converged else "Newton iteration limit reached"
    return choi, FitResult(y, value, newton, converged, gnorm, message=msg, history=history)


__all__ = ["solve_choi_interior"]
