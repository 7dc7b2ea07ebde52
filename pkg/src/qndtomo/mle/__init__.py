"""Maximum-likelihood reconstruction of gate sets, POVMs and Choi matrices."""
from .gst import GstEstimate, gauge_fix, gst_mle
from .optimizer import FitResult, OptimizerConfig, SolverError
from .protocol import EstimateSet, ProblemLog, plan_problems, run_protocol
from .tomography import choi_mle, povm_mle

__all__ = [
    "EstimateSet",
    "FitResult",
    "GstEstimate",
    "OptimizerConfig",
    "ProblemLog",
    "SolverError",
    "choi_mle",
    "gauge_fix",
    "gst_mle",
    "plan_problems",
    "povm_mle",
    "run_protocol",
]
