"""The four-step reconstruction protocol over a whole device."""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..channels import ChoiMatrix, Povm, QndMeasurement, bits, label_str, povm_tensor
from ..circuits import DeviceGraph
from ..counts import CountsTable, target_id
from .gst import GstEstimate, gst_mle
from .optimizer import FitResult, OptimizerConfig, SolverError
from .tomography import choi_mle, heisenberg_effects, povm_mle, prep_states, qndmt_counts, rotation_liouvilles

GST_KIND = "gst"
CHOI_1Q = "choi-1q"
POVM_2Q = "povm-2q"
CHOI_2Q = "choi-2q"

LOG_COLUMNS = ("problem_id", "kind", "iterations", "objective", "gradient_norm", "constraint_residual",
               "converged", "restarts")


@dataclass(frozen=True)
class Problem:
    problem_id: str
    kind: str
    target: object  # qubit index or edge tuple
    outcome: tuple[int, ...] = ()


def plan_problems(graph: DeviceGraph) -> list[Problem]:
    """Every optimisation problem of the protocol, in execution order (``3N + 5M`` of them)."""
    qs = range(graph.n_qubits)
    plan = [Problem(f"gst:{q}", GST_KIND, q) for q in qs]
    plan += [Problem(f"choi:{q}:{n}", CHOI_1Q, q, (n,)) for q in qs for n in range(2)]
    plan += [Problem(f"povm:{target_id(e)}", POVM_2Q, e) for e in graph.edges]
    plan += [Problem(f"choi:{target_id(e)}:{label_str(bits(n, 2))}", CHOI_2Q, e, bits(n, 2))
             for e in graph.edges for n in range(4)]
    return plan


@dataclass
class ProblemLog:
    problem_id: str
    kind: str
    iterations: int
    objective: float
    gradient_norm: float
    constraint_residual: float
    converged: bool
    restarts: int

    @classmethod
    def from_fit(cls, p: Problem, fit: FitResult) -> "ProblemLog":
        return cls(p.problem_id, p.kind, fit.iterations, fit.objective, fit.gradient_norm,
                   fit.constraint_residual, fit.converged, fit.restarts_used)

    def row(self) -> tuple:
        return (self.problem_id, self.kind, self.iterations, repr(float(self.objective)),
                f"{self.gradient_norm:.3e}", f"{self.constraint_residual:.3e}", int(self.converged), self.restarts)


@dataclass
class EstimateSet:
    gst: dict[int, GstEstimate] = field(default_factory=dict)
    qubits: dict[int, QndMeasurement] = field(default_factory=dict)
    edge_povms: dict[tuple[int, int], Povm] = field(default_factory=dict)
    edges: dict[tuple[int, int], QndMeasurement] = field(default_factory=dict)
    logs: list[ProblemLog] = field(default_factory=list)

    @property
    def n_problems(self) -> int:
        return len(self.logs)

    def failed(self) -> list[str]:
        return [log.problem_id for log in self.logs if not log.converged]

    def logs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        w.writerows(log.row() for log in self.logs)
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "gst": {str(q): g.to_dict() for q, g in sorted(self.gst.items())},
            "qubits": {str(q): m.to_dict() for q, m in sorted(self.qubits.items())},
            "edge_povms": {target_id(e): p.to_dict() for e, p in sorted(self.edge_povms.items())},
            "edges": {target_id(e): m.to_dict() for e, m in sorted(self.edges.items())},
            "problems": [dict(zip(LOG_COLUMNS, (lg.problem_id, lg.kind, lg.iterations, lg.objective,
                                                 lg.gradient_norm, lg.constraint_residual, lg.converged,
                                                 lg.restarts)))
                         for lg in self.logs],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EstimateSet":
        def edge(k):
            a, b = k.split("-")
            return int(a), int(b)

        return cls(
            {int(q): GstEstimate.from_dict(g) for q, g in doc["gst"].items()},
            {int(q): QndMeasurement.from_dict(m) for q, m in doc["qubits"].items()},
            {edge(k): Povm.from_dict(p) for k, p in doc["edge_povms"].items()},
            {edge(k): QndMeasurement.from_dict(m) for k, m in doc["edges"].items()},
            [ProblemLog(*(d[c] for c in LOG_COLUMNS)) for d in doc.get("problems", [])],
        )


def _fan_out(fn, problems, jobs: int):
    def guarded(p):
        try:
            return fn(p)
        except SolverError:
            raise
        except (ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
            raise SolverError(p.problem_id, str(exc)) from exc

    if jobs > 1 and len(problems) > 1:
        with ThreadPoolExecutor(jobs) as pool:
            return list(pool.map(guarded, problems))
    return [guarded(p) for p in problems]


def run_protocol(counts: CountsTable, graph: DeviceGraph, cfg: OptimizerConfig | None = None, jobs: int = 1,
                 gst_fixed: dict[int, GstEstimate] | None = None, warm: EstimateSet | None = None) -> EstimateSet:
    """Run GST, single-qubit Choi, two-qubit POVM and two-qubit Choi reconstructions.

    ``gst_fixed`` reuses given GST estimates (their problems are still logged,
    with zero iterations); ``warm`` seeds every problem from a previous
    estimate set. Results do not depend on ``jobs``.
    """
    cfg = cfg or OptimizerConfig()
    plan = plan_problems(graph)
    by_kind = {k: [p for p in plan if p.kind == k] for k in (GST_KIND, CHOI_1Q, POVM_2Q, CHOI_2Q)}
    out = EstimateSet()
    logs: dict[str, ProblemLog] = {}

    # step 1: gate set tomography per qubit
    def solve_gst(p):
        if gst_fixed is not None:
            est = gst_fixed[p.target]
            return est, FitResult(np.zeros(0), est.objective, 0, True, 0.0, message="fixed")
        init = warm.gst.get(p.target) if warm is not None else None
        return gst_mle(counts, cfg, p.target, init=init, problem_id=p.problem_id)

    for p, (est, fit) in zip(by_kind[GST_KIND], _fan_out(solve_gst, by_kind[GST_KIND], jobs)):
        out.gst[p.target] = est
        logs[p.problem_id] = ProblemLog.from_fit(p, fit)

    # step 2: single-qubit Choi blocks constrained by the GST POVMs
    design_1q = {}
    for q in range(graph.n_qubits):
        g = out.gst[q]
        design_1q[q] = (prep_states([g]), heisenberg_effects(rotation_liouvilles([g]), g.povm),
                        qndmt_counts(counts, q))

    def solve_choi_1q(p):
        q, n = p.target, p.outcome[0]
        states, effects, data = design_1q[q]
        init = warm.qubits[q][n] if warm is not None and q in warm.qubits else None
        return choi_mle(data[:, :, n, :], out.gst[q].povm[n], states, effects, p.outcome, cfg, init, p.problem_id)

    blocks: dict[int, list[ChoiMatrix]] = {q: [None, None] for q in range(graph.n_qubits)}
    for p, (c, fit) in zip(by_kind[CHOI_1Q], _fan_out(solve_choi_1q, by_kind[CHOI_1Q], jobs)):
        blocks[p.target][p.outcome[0]] = c
        logs[p.problem_id] = ProblemLog.from_fit(p, fit)
    out.qubits = {q: QndMeasurement(tuple(b)) for q, b in blocks.items()}

    # step 3: joint POVMs of connected pairs
    edge_data = {e: qndmt_counts(counts, e) for e in graph.edges}
    edge_states = {e: prep_states([out.gst[e[0]], out.gst[e[1]]]) for e in graph.edges}

    def solve_povm(p):
        e = p.target
        init = warm.edge_povms.get(e) if warm is not None else None
        init = init or povm_tensor(out.gst[e[0]].povm, out.gst[e[1]].povm)
        return povm_mle(edge_data[e].sum(axis=(1, 3)), edge_states[e], cfg, init, p.problem_id)

    for p, (pv, fit) in zip(by_kind[POVM_2Q], _fan_out(solve_povm, by_kind[POVM_2Q], jobs)):
        out.edge_povms[p.target] = pv
        logs[p.problem_id] = ProblemLog.from_fit(p, fit)

    # step 4: two-qubit Choi blocks constrained by the joint POVMs
    edge_effects = {
        e: heisenberg_effects(rotation_liouvilles([out.gst[e[0]], out.gst[e[1]]]), out.edge_povms[e])
        for e in graph.edges
    }

    def solve_choi_2q(p):
        e = p.target
        n = 2 * p.outcome[0] + p.outcome[1]
        init = warm.edges[e][n] if warm is not None and e in warm.edges else None
        return choi_mle(edge_data[e][:, :, n, :], out.edge_povms[e][n], edge_states[e], edge_effects[e],
                        p.outcome, cfg, init, p.problem_id)

    eblocks: dict = {e: [None] * 4 for e in graph.edges}
    for p, (c, fit) in zip(by_kind[CHOI_2Q], _fan_out(solve_choi_2q, by_kind[CHOI_2Q], jobs)):
        eblocks[p.target][2 * p.outcome[0] + p.outcome[1]] = c
        logs[p.problem_id] = ProblemLog.from_fit(p, fit)
    out.edges = {e: QndMeasurement(tuple(b)) for e, b in eblocks.items()}

    out.logs = [logs[p.problem_id] for p in plan]
    return out


__all__ = ["EstimateSet", "Problem", "ProblemLog", "plan_problems", "run_protocol"]
