"""Metrics, direction oracle, preservation audit and the test-split benchmark"""
from .audit import preservation_audit
from .benchmark import METHODS, EvalConfig, EvalReport, EvalRow, run_benchmark
from .metrics import feature_distance, mse
from .oracle import OracleResult, direction_oracle, rank_directions

__all__ = [
    "preservation_audit",
    "METHODS",
    "EvalConfig",
    "EvalReport",
    "EvalRow",
    "run_benchmark",
    "feature_distance",
    "mse",
    "OracleResult",
    "direction_oracle",
    "rank_directions",
]
