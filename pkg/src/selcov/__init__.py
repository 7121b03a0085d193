"""Selective (confidence-thresholded) annotation with phenology statistics on top."""
from __future__ import annotations

__version__ = "0.1.0"

from .core import (
    DatasetReport,
    Decision,
    IngestConfig,
    PredictionRecord,
    SpecimenMeta,
    check_probabilities,
    decide,
    ingest_predictions,
    write_csv,
    write_jsonl,
)
from .engine import (
    CurveTable,
    EvalPoint,
    GridSpec,
    ThresholdPolicy,
    apply_threshold,
    evaluate_at_threshold,
    fixed_policy,
    select_threshold_for_accuracy,
    select_threshold_for_coverage,
    sweep_curve,
)
from .errors import ConvergenceError, DataError, Intractable, SelcovError, UsageError
from .stats import (
    linear_regression,
    regularized_incomplete_beta,
    student_t_two_sided_p,
    welch_t_test,
)

__all__ = [
    "__version__",
    "DatasetReport", "Decision", "IngestConfig", "PredictionRecord", "SpecimenMeta",
    "check_probabilities", "decide", "ingest_predictions", "write_csv", "write_jsonl",
    "CurveTable", "EvalPoint", "GridSpec", "ThresholdPolicy", "apply_threshold",
    "evaluate_at_threshold", "fixed_policy", "select_threshold_for_accuracy",
    "select_threshold_for_coverage", "sweep_curve",
    "ConvergenceError", "DataError", "Intractable", "SelcovError", "UsageError",
    "linear_regression", "regularized_incomplete_beta", "student_t_two_sided_p", "welch_t_test",
]
