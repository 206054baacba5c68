"""Observation-window benchmarking for 30-day readmission prediction after hip and knee surgery.

The package slices longitudinal patient records into history windows,
encodes clinical notes and structured encounters, trains linear and
neural classifiers per window and reports AUROC sweeps. A synthetic
generator plants temporal signal so the pipeline can be exercised
without protected data.
"""

__version__ = "0.1.0"

from .config import ConfigError, RunConfig, from_dict, load_config
from .dataset import Dataset, prepare_dataset
from .ehr import CohortCriteria, ObservationWindow, load_corpus
from .metrics import auroc, bootstrap_ci
from .report import compare_day_vs_history, emit_report
from .results import ResultRow, ResultsTable
from .sweep import run_sweep, train_cell
from .synth import SynthConfig, audit_signal, generate

__all__ = [
    "__version__",
    "ConfigError",
    "RunConfig",
    "from_dict",
    "load_config",
    "Dataset",
    "prepare_dataset",
    "CohortCriteria",
    "ObservationWindow",
    "load_corpus",
    "auroc",
    "bootstrap_ci",
    "compare_day_vs_history",
    "emit_report",
    "ResultRow",
    "ResultsTable",
    "run_sweep",
    "train_cell",
    "SynthConfig",
    "audit_signal",
    "generate",
]
