"""Fast contractions with the Choi tomography design."""
from __future__ import annotations

import numpy as np

from ..linalg import herm
from .optimizer import log_likelihood


class ChoiDesign:
    """Contractions with ``X[v, u, m] = E[u, m] (x) rho_v^T`` without forming ``X``.

    Traces factor into a contraction over the input index pair followed by
    one over the output pair, which is far cheaper than the dense design.
    """

    def __init__(self, states: np.ndarray, effects: np.ndarray):
        self.states = np.asarray(states, dtype=complex)
        self.effects = np.asarray(effects, dtype=complex)
        nv, di = self.states.shape[:2]
        do = self.effects.shape[-1]
        self.d_in, self.d_out = di, do
        self.shape = (nv,) + self.effects.shape[:2]
        self._rho = self.states.reshape(nv, di * di).T  # rows (d, c) of rho[d, c]
        # rows (b, a) of E[u, m, a, b]
        self._eff = self.effects.transpose(3, 2, 0, 1).reshape(do * do, -1)

    def probs(self, choi: np.ndarray) -> np.ndarray:
        return self.probs_batch(choi[None])[0].reshape(-1)

    def probs_batch(self, chois: np.ndarray) -> np.ndarray:
        """``q[j, v, (u, m)]`` for a stack of matrices."""
        do, di, j = self.d_out, self.d_in, chois.shape[0]
        y = chois.reshape(j, do, di, do, di).transpose(0, 1, 3, 2, 4).reshape(j * do * do, di * di)
        z = (y @ self._rho).reshape(j, do * do, -1).transpose(0, 2, 1)  # (j, v, (b, a))
        return np.real(z @ self._eff)

    def loglik(self, choi: np.ndarray, counts: np.ndarray):
        value, w = log_likelihood(np.reshape(counts, -1), self.probs(choi))
        return value, self.adjoint(w)

    def adjoint(self, w: np.ndarray) -> np.ndarray:
        """``sum_k w_k X_k``."""
        do, di = self.d_out, self.d_in
        wm = np.reshape(w, (self.shape[0], -1)) @ self._eff.T  # (v, (b, a))
        g = np.einsum("vba,vdc->acbd", wm.reshape(-1, do, do), self.states)
        return herm(g.reshape(do * di, do * di))


__all__ = ["ChoiDesign"]
