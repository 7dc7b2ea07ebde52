"""Constraint-eliminating parameterisations with hand-written pullbacks.

Every map here sends a flat real vector to physical objects (density
matrices, POVMs, Choi matrices with a prescribed input marginal) and comes
with a vector-Jacobian product. Gradients with respect to a Hermitian matrix
``X`` follow the convention ``dL = Tr(G dX)`` with ``G`` Hermitian.
"""
from __future__ import annotations

import numpy as np

from ..linalg import (
    cholesky_build,
    cholesky_params,
    dagger,
    grad_lower_params,
    herm,
    inv_sqrt_with_vjp,
    lower_from_params,
    sqrtm_psd,
)


def ptrace_out(m: np.ndarray, d: int) -> np.ndarray:
    """Trace over the output factor of a ``(d*d, d*d)`` matrix in ``(out, in)`` ordering."""
    return np.einsum("ikil->kl", m.reshape(d, d, d, d))


class DensityParam:
    """``rho = T T^dagger / Tr(T T^dagger)``."""

    def __init__(self, dim: int):
        self.dim = dim
        self.size = dim * dim

    def build(self, x: np.ndarray):
        t = lower_from_params(x, self.dim)
        a = t @ dagger(t)
        tr = np.trace(a).real
        rho = a / tr

        def vjp(g: np.ndarray) -> np.ndarray:
            ga = g / tr - np.trace(g @ a).real / tr ** 2 * np.eye(self.dim)
            return grad_lower_params(t, herm(ga))

        return rho, vjp

    def init(self, rho: np.ndarray, mix: float = 0.05) -> np.ndarray:
        d = self.dim
        return cholesky_params((1 - mix) * rho + mix * np.eye(d) / d)


class PovmParam:
    """``Pi_n = K A_n K`` with ``A_n = T_n T_n^dagger`` and ``K = (sum A)^(-1/2)``."""

    def __init__(self, dim: int, n_outcomes: int):
        self.dim = dim
        self.n = n_outcomes
        self.size = n_outcomes * dim * dim

    def _split(self, x):
        s = self.dim * self.dim
        return [x[i * s:(i + 1) * s] for i in range(self.n)]

    def build(self, x: np.ndarray):
        ts = [lower_from_params(p, self.dim) for p in self._split(np.asarray(x, dtype=float))]
        a = [t @ dagger(t) for t in ts]
        k, k_vjp = inv_sqrt_with_vjp(sum(a))
        elems = [k @ an @ k for an in a]

        def vjp(gs) -> np.ndarray:
            gk = sum(an @ k @ g + g @ k @ an for an, g in zip(a, gs))
            gs_ = k_vjp(herm(gk))
            return np.concatenate([grad_lower_params(t, herm(k @ g @ k + gs_)) for t, g in zip(ts, gs)])

        return elems, vjp

    def init(self, elems, mix: float = 0.05) -> np.ndarray:
        d = self.dim
        return np.concatenate([cholesky_params((1 - mix) * e + mix * np.eye(d) / len(elems)) for e in elems])


class ChoiParam:
    """PSD ``Yt = (I (x) R) A (I (x) R)^dagger`` whose input marginal is fixed.

    ``R = C (Tr_out A)^(-1/2)`` so that ``Tr_out Yt = C C^dagger``. ``C = I``
    gives trace-preserving maps; ``C = (Pi^T)^(1/2)`` pins the POVM element of
    the block to ``Pi``.
    """

    def __init__(self, dim: int, marginal: np.ndarray | None = None):
        self.dim = dim
        self.size = dim ** 4
        if marginal is None:
            self.c = np.eye(dim, dtype=complex)
        else:
            self.c = sqrtm_psd(np.asarray(marginal, dtype=complex).T)

    @classmethod
    def for_povm_element(cls, pi: np.ndarray) -> "ChoiParam":
        return cls(pi.shape[0], pi)

    def build(self, x: np.ndarray):
        d = self.dim
        t = lower_from_params(x, d * d)
        a = t @ dagger(t)
        k, k_vjp = inv_sqrt_with_vjp(ptrace_out(a, d))
        r = self.c @ k
        b = np.kron(np.eye(d), r)
        choi = b @ a @ dagger(b)

        def vjp(g: np.ndarray) -> np.ndarray:
            ga = dagger(b) @ g @ b
            y = ptrace_out(a @ dagger(b) @ g, d)
            gk = herm(2 * y @ self.c)
            ga = ga + np.kron(np.eye(d), k_vjp(gk))
            return grad_lower_params(t, herm(ga))

        return choi, vjp

    def init(self, psd: np.ndarray, mix: float = 0.05) -> np.ndarray:
        n = self.dim * self.dim
        return cholesky_params((1 - mix) * psd + mix * np.eye(n) / n)


class FreePsdParam:
    """Unconstrained PSD matrix ``T T^dagger`` (used by the penalty formulation)."""

    def __init__(self, n: int):
        self.n = n
        self.size = n * n

    def build(self, x: np.ndarray):
        t = lower_from_params(x, self.n)
        a = t @ dagger(t)
        return a, lambda g: grad_lower_params(t, herm(g))

    def init(self, m: np.ndarray, mix: float = 0.05) -> np.ndarray:
        return cholesky_params((1 - mix) * m + mix * np.trace(m).real * np.eye(self.n) / self.n)


__all__ = ["ChoiParam", "DensityParam", "FreePsdParam", "PovmParam", "cholesky_build", "ptrace_out"]
