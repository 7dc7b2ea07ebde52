"""Shared log-likelihood maximiser over unconstrained real parameters."""
from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 5000
    gradient_tolerance: float = 1e-7
    constraint_tolerance: float = 1e-6
    restarts: int = 3
    seed: int = 0
    choi_constraint: str = "exact"  # or "penalty"
    gst_regularization: float = 1.0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.gradient_tolerance <= 0 or self.constraint_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.gst_regularization < 0:
            raise ValueError("gst_regularization must be >= 0")
        if self.restarts < 0:
            raise ValueError("restarts must be >= 0")
        if self.choi_constraint not in ("exact", "penalty"):
            raise ValueError(f"unknown choi_constraint {self.choi_constraint!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "OptimizerConfig":
        return cls(**doc)

    def rng(self, problem_id: str) -> np.random.Generator:
        return np.random.default_rng([self.seed, zlib.crc32(problem_id.encode())])


def log_likelihood(counts: np.ndarray, probs: np.ndarray):
    """``sum c log q`` with zero-count cells skipped and ``q`` floored; also ``dL/dq``."""
    counts = np.asarray(counts, dtype=float)
    q = np.maximum(np.real(probs), PROB_FLOOR)
    mask = counts > 0
    value = float(np.sum(counts[mask] * np.log(q[mask])))
    grad = np.where(mask, counts / q, 0.0)
    return value, grad


@dataclass
class FitResult:
    x: np.ndarray
    objective: float
    iterations: int
    converged: bool
    gradient_norm: float
    restarts_used: int = 0
    message: str = ""
    constraint_residual: float = 0.0
    history: list[float] = field(default_factory=list, repr=False)


class SolverError(RuntimeError):
    def __init__(self, problem_id: str, message: str):
        super().__init__(f"{problem_id}: {message}")
        self.problem_id = problem_id


def maximize(fun, x0: np.ndarray, cfg: OptimizerConfig, rng: np.random.Generator | None = None,
             scale: float = 1.0) -> FitResult:
    """Maximise ``fun(x) -> (value, grad)`` with L-BFGS-B on ``-fun / scale``.

    The objective of every accepted iterate is recorded in ``history``; the
    line search only accepts steps that increase it. When a run ends without
    meeting the gradient tolerance, up to ``cfg.restarts`` further runs start
    from jittered copies of the best point.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    best: FitResult | None = None
    start = np.asarray(x0, dtype=float)
    for attempt in range(cfg.restarts + 1):
        cache: dict[bytes, float] = {}

        def neg(x):
            v, g = fun(x)
            cache[x.tobytes()] = v
            return -v / scale, -np.asarray(g, dtype=float) / scale

        history = [fun(start)[0]]

        def record(xk):
            v = cache.get(np.asarray(xk).tobytes())
            history.append(v if v is not None else fun(xk)[0])

        res = minimize(
            neg, start, jac=True, method="L-BFGS-B", callback=record,
            options={"maxiter": cfg.max_iterations, "gtol": cfg.gradient_tolerance, "ftol": 1e-15, "maxcor": 30},
        )
        gnorm = float(np.max(np.abs(res.jac))) if res.jac is not None else float("nan")
        # a stalled line search at a tiny gradient is a converged run in practice
        converged = bool(res.success) or gnorm < 1e3 * cfg.gradient_tolerance
        fit = FitResult(res.x, -float(res.fun) * scale, int(res.nit), converged, gnorm,
                        restarts_used=attempt, message=str(res.message), history=history)
        if best is None or fit.objective > best.objective:
            best = fit
        if converged:
            break
        start = best.x + 1e-3 * rng.normal(size=best.x.shape)
    best.restarts_used = attempt
    return best


__all__ = [
    "FitResult",
    "OptimizerConfig",
    "PROB_FLOOR",
    "SolverError",
    "log_likelihood",
    "maximize",
]
