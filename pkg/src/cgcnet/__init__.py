"""Treatment-effect networks with causal-graph constrained representations."""

from .bench import Dataset, SyntheticConfig, generate, load_csv, split
from .discovery import DiscoveryFailure, fast_ica, ica_lingam
from .graph import CausalGraph, VariableGrouping, ancestors, build_groups, groups_from_forbidden
from .metrics import EvalReport, ate_error, att_error, ratio_report, sqrt_pehe
from .models import ModelSpec, build_model, fit, predict, train

__version__ = "0.1.0"

__all__ = [
    "CausalGraph", "Dataset", "DiscoveryFailure", "EvalReport", "ModelSpec", "SyntheticConfig",
    "VariableGrouping", "ancestors", "ate_error", "att_error", "build_groups", "build_model",
    "fast_ica", "fit", "generate", "groups_from_forbidden", "ica_lingam", "load_csv", "predict",
    "ratio_report", "split", "sqrt_pehe", "train",
]
