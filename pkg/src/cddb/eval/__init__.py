"""Metrics, synthetic data and desk-scale experiments."""

from .checks import CheckResult, SuiteReport, theorem_suite
from .data import SyntheticDataset
from .harness import (
    CSV_HEADER, AblationResult, Problem, SweepResult, TrialResult, gd_ablation, noise_robustness, pareto_sweep, run_trial,
)
from .metrics import energy_distance, mse, psnr, residual_norm

__all__ = [
    "CSV_HEADER", "AblationResult", "CheckResult", "Problem", "SuiteReport", "SweepResult", "SyntheticDataset", "TrialResult",
    "energy_distance", "gd_ablation", "mse", "noise_robustness", "pareto_sweep", "psnr", "residual_norm",
    "run_trial", "theorem_suite",
]
