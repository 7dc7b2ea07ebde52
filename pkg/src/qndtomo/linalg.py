"""Small dense linear-algebra helpers shared by the rest of the package.

Operators are plain ``numpy`` complex arrays. Nothing here is larger than a
256x256 matrix (the reshuffled Choi matrix of a two-qubit process), so all
routines are dense and favour clarity over speed.
"""
from __future__ import annotations

import numpy as np

ATOL = 1e-12  # algebraic identities
ITOL = 1e-9  # results of iterative/eigen routines

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (I2, SX, SY, SZ)


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with ``a`` as the most significant factor."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def herm(m: np.ndarray) -> np.ndarray:
    """Hermitian part of ``m``."""
    return 0.5 * (m + dagger(m))


def is_hermitian(m: np.ndarray, atol: float = ATOL) -> bool:
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and np.allclose(m, dagger(m), atol=atol, rtol=0)


def is_psd(m: np.ndarray, atol: float = ITOL) -> bool:
    if not is_hermitian(m, atol=max(atol, ATOL)):
        return False
    return bool(np.linalg.eigvalsh(herm(m)).min() >= -atol)


def operator_norm(m: np.ndarray) -> float:
    """Largest singular value, from the spectrum of ``m^dagger m``."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"operator_norm expects a square matrix, got shape {m.shape}")
    evals = np.linalg.eigvalsh(herm(dagger(m) @ m))
    return float(np.sqrt(max(evals[-1], 0.0)))


def frobenius_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def n_cholesky_params(dim: int) -> int:
    return dim * dim


def lower_from_params(params: np.ndarray, dim: int) -> np.ndarray:
    """Lower-triangular ``T`` from a real vector.

    Layout: ``dim`` real diagonal entries, then the real parts of the strictly
    lower entries (``np.tril_indices(dim, -1)`` order), then their imaginary
    parts.
    """
    params = np.asarray(params, dtype=float)
    if params.shape != (dim * dim,):
        raise ValueError(f"expected {dim * dim} Cholesky parameters for dim {dim}, got {params.shape}")
    t = np.zeros((dim, dim), dtype=complex)
    t[np.diag_indices(dim)] = params[:dim]
    rows, cols = np.tril_indices(dim, -1)
    n_low = rows.size
    t[rows, cols] = params[dim:dim + n_low] + 1j * params[dim + n_low:]
    return t


def params_from_lower(t: np.ndarray) -> np.ndarray:
    dim = t.shape[0]
    rows, cols = np.tril_indices(dim, -1)
    return np.concatenate([np.real(np.diag(t)), np.real(t[rows, cols]), np.imag(t[rows, cols])])


def cholesky_build(params: np.ndarray, dim: int) -> np.ndarray:
    """PSD matrix ``T T^dagger`` with ``T`` given by :func:`lower_from_params`."""
    t = lower_from_params(params, dim)
    return t @ dagger(t)


def cholesky_params(m: np.ndarray, jitter: float = 1e-10) -> np.ndarray:
    """Parameters whose :func:`cholesky_build` reproduces the PSD matrix ``m``.

    A small ``jitter`` keeps the factorisation defined for rank-deficient input.
    """
    m = herm(np.asarray(m, dtype=complex))
    dim = m.shape[0]
    evals, evecs = np.linalg.eigh(m)
    m = (evecs * np.clip(evals, 0.0, None)) @ dagger(evecs) + jitter * np.eye(dim)
    return params_from_lower(np.linalg.cholesky(m))


def grad_lower_params(t: np.ndarray, grad_a: np.ndarray) -> np.ndarray:
    """Chain rule from ``A = T T^dagger`` back to the real Cholesky parameters.

    ``grad_a`` is the Hermitian gradient of a real scalar with respect to ``A``
    (so that ``dL = Tr(grad_a dA)``).
    """
    dim = t.shape[0]
    m = dagger(t) @ grad_a  # dL = 2 Re Tr(m dT)
    g = 2.0 * m.T  # g[a, b] multiplies dT[a, b]
    rows, cols = np.tril_indices(dim, -1)
    return np.concatenate([np.real(np.diag(g)), np.real(g[rows, cols]), -np.imag(g[rows, cols])])


def inv_sqrt_with_vjp(s: np.ndarray):
    """``s^(-1/2)`` for Hermitian positive-definite ``s`` and its pullback.

    The returned function maps a Hermitian gradient with respect to
    ``s^(-1/2)`` onto the Hermitian gradient with respect to ``s``
    (Daleckii-Krein divided differences).
    """
    evals, v = np.linalg.eigh(herm(s))
    if evals[0] <= 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    f = evals ** -0.5
    k = (v * f) @ dagger(v)
    diff = evals[:, None] - evals[None, :]
    close = np.abs(diff) <= 1e-12 * np.maximum(np.abs(evals[:, None]), 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma = np.where(close, -0.5 * evals[:, None] ** -1.5, (f[:, None] - f[None, :]) / diff)

    def vjp(h: np.ndarray) -> np.ndarray:
        return v @ (gamma * (dagger(v) @ h @ v)) @ dagger(v)

    return k, vjp


def sqrtm_psd(m: np.ndarray) -> np.ndarray:
    evals, v = np.linalg.eigh(herm(m))
    return (v * np.sqrt(np.clip(evals, 0.0, None))) @ dagger(v)


def hermitian_basis(n: int, traceless: bool = False) -> np.ndarray:
    """Frobenius-orthonormal basis of ``n x n`` Hermitian matrices, stacked on axis 0.

    With ``traceless`` the identity direction is dropped (generalised Gell-Mann
    diagonals replace the matrix units on the diagonal).
    """
    out = []
    if traceless:
        for k in range(1, n):
            diag = np.zeros(n)
            diag[:k] = 1.0
            diag[k] = -k
            out.append(np.diag(diag / np.sqrt(k * (k + 1))).astype(complex))
    else:
        out += [np.diag(np.eye(n)[i]).astype(complex) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            re = np.zeros((n, n), dtype=complex)
            re[i, j] = re[j, i] = 1 / np.sqrt(2)
            im = np.zeros((n, n), dtype=complex)
            im[i, j], im[j, i] = 1j / np.sqrt(2), -1j / np.sqrt(2)
            out += [re, im]
    return np.array(out).reshape(-1, n, n)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    z = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = z @ dagger(z)
    return rho / np.trace(rho).real


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return herm(z)
