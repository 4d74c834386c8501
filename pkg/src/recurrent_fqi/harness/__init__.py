"""Experiment harness: seeded runs, metrics, reports and the CLI."""

from ..valuelearn import RunRecord
from .experiment import ExperimentConfig, ExperimentResult, full_grid, run_experiment
from .metrics import MetricSummary, learning_performance, learning_time, summarize, welch_t_test
from .report import emit_results, format_report, read_summary_csv, write_summary_csv

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "MetricSummary",
    "RunRecord",
    "emit_results",
    "format_report",
    "full_grid",
    "learning_performance",
    "learning_time",
    "read_summary_csv",
    "run_experiment",
    "summarize",
    "welch_t_test",
    "write_summary_csv",
]
