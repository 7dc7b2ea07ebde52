"""Nonparametric bootstrap of the reconstruction pipeline."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .circuits import DeviceGraph
from .counts import CountsTable, target_id
from .mle import EstimateSet, OptimizerConfig, SolverError, run_protocol
from .quantifiers import assess, quantities

log = logging.getLogger(__name__)

DEFAULT_RESAMPLES = 1000
FAIL_FRACTION = 0.01


def resample(counts: CountsTable, seed) -> CountsTable:
    """Redraw every circuit's shots from its empirical outcome frequencies.

    ``seed`` is anything ``numpy.random.default_rng`` accepts; records are
    visited in sorted order so equal seeds give equal tables.
    """
    rng = np.random.default_rng(seed)

    def draw(rec):
        flat = rec.counts.reshape(-1)
        total = int(flat.sum())
        if total == 0:
            return rec.counts.copy()
        return rng.multinomial(total, flat / total).reshape(rec.counts.shape)

    return counts.map_counts(draw)


def choi_elements(est: EstimateSet) -> dict[str, np.ndarray]:
    """Every reconstructed Choi block, keyed ``"<target>/<outcome>"``."""
    out = {}
    for group in (est.qubits, est.edges):
        for t, m in sorted(group.items()):
            for c in m:
                out[f"{target_id(t)}/{''.join(map(str, c.outcome))}"] = c.psd
    return out


class _Moments:
    """Sums of deviations from a reference value; insensitive to replicate order."""

    def __init__(self, ref):
        self.ref = ref
        self.n = 0
        self.s1 = 0.0
        self.s2 = 0.0

    def add(self, x):
        d = x - self.ref
        self.n += 1
        self.s1 = self.s1 + d
        self.s2 = self.s2 + np.abs(d) ** 2

    def mean(self):
        return self.ref + self.s1 / self.n

    def std(self):
        if self.n < 2:
            return np.zeros_like(np.abs(self.ref), dtype=float) if np.ndim(self.ref) else 0.0
        var = (self.s2 - np.abs(self.s1) ** 2 / self.n) / (self.n - 1)
        return np.sqrt(np.maximum(var, 0.0))


@dataclass
class BootstrapResult:
    n_resamples: int
    n_failed: int
    quantity_std: dict[str, float] = field(default_factory=dict)
    quantity_mean: dict[str, float] = field(default_factory=dict)
    choi_std: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    failed_problems: list[str] = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        """More than 1% of the replicates failed."""
        return self.n_failed > FAIL_FRACTION * self.n_resamples

    def to_dict(self) -> dict:
        return {
            "n_resamples": self.n_resamples,
            "n_failed": self.n_failed,
            "flagged": self.flagged,
            "quantity_std": dict(sorted(self.quantity_std.items())),
            "quantity_mean": dict(sorted(self.quantity_mean.items())),
            "choi_std": {k: v.tolist() for k, v in sorted(self.choi_std.items())},
            "failed_problems": list(self.failed_problems),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BootstrapResult":
        return cls(int(doc["n_resamples"]), int(doc["n_failed"]), dict(doc["quantity_std"]),
                   dict(doc.get("quantity_mean", {})),
                   {k: np.asarray(v, dtype=float) for k, v in doc.get("choi_std", {}).items()},
                   list(doc.get("failed_problems", [])))


def bootstrap_run(counts: CountsTable, graph: DeviceGraph, n: int = DEFAULT_RESAMPLES, seed: int = 0,
                  cfg: OptimizerConfig | None = None, point: EstimateSet | None = None, rerun_gst: bool = False,
                  jobs: int = 1) -> BootstrapResult:
    """Standard deviations of Choi coefficients and quantifiers over ``n`` resampled tables.

    Replicate ``r`` is drawn with seed ``(seed, r)``. GST estimates are held
    at the point estimate unless ``rerun_gst``. Replicates whose
    reconstruction raises are skipped and counted.
    """
    if n < 2:
        raise ValueError("the bootstrap needs at least two resamples")
    cfg = cfg or OptimizerConfig()
    point = point if point is not None else run_protocol(counts, graph, cfg)
    q_acc = {k: _Moments(v) for k, v in quantities(assess(point)).items()}
    c_acc = {k: _Moments(v) for k, v in choi_elements(point).items()}

    def replicate(r: int):
        table = resample(counts, [seed, r])
        try:
            est = run_protocol(table, graph, cfg, gst_fixed=None if rerun_gst else point.gst)
        except SolverError as exc:
            log.warning("bootstrap replicate %d failed: %s", r, exc)
            return r, None, exc.problem_id
        return r, (quantities(assess(est)), choi_elements(est)), None

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(replicate, range(n)))
    else:
        results = [replicate(r) for r in range(n)]

    failed = []
    for r, res, problem in results:
        if res is None:
            failed.append(f"{r}:{problem}")
            continue
        qs, cs = res
        for k, v in qs.items():
            q_acc[k].add(v)
        for k, v in cs.items():
            c_acc[k].add(v)

    out = BootstrapResult(n, len(failed), failed_problems=failed)
    for k, acc in q_acc.items():
        if acc.n:
            out.quantity_std[k] = float(acc.std())
            out.quantity_mean[k] = float(acc.mean())
    out.choi_std = {k: acc.std() for k, acc in c_acc.items() if acc.n}
    if out.flagged:
        log.warning("%d of %d bootstrap replicates failed", out.n_failed, n)
    return out


def attach_std(reports, result: BootstrapResult) -> None:
    """Copy scalar deviations onto quality reports as ``std`` entries."""
    for rep in reports:
        for k in rep.scalars():
            key = f"{k}[{rep.target}]"
            if key in result.quantity_std:
                rep.std[k] = result.quantity_std[key]


__all__ = ["BootstrapResult", "DEFAULT_RESAMPLES", "attach_std", "bootstrap_run", "choi_elements", "resample"]
