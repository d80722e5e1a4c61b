"""Evaluating markers for classifying who benefits from treatment.

Benefit is defined jointly by both potential outcomes, so it is never
observed. Accuracy is identified under conditional independence of the
potential outcomes (given covariates, or given covariates and a latent
variable) and explored over sensitivity grids.
"""
__version__ = "0.1.0"

from .data import AnalysisConfig, BenefitDefinition, TrialDataset, evaluate_benefit, load_trial
from .errors import (
    BenefitmarkError,
    BootstrapError,
    ConvergenceError,
    DegenerateError,
    FitError,
    RankDeficientError,
    SeparationError,
    ValidationError,
)
from .pipeline import AnalysisResult, SettingResult, analyze
from .bootstrap import run_bootstrap
from .simulator import Scenario, simulate_trial, oracle_pi_z, oracle_roc

__all__ = [
    "__version__",
    "AnalysisConfig",
    "AnalysisResult",
    "BenefitDefinition",
    "BenefitmarkError",
    "BootstrapError",
    "ConvergenceError",
    "DegenerateError",
    "FitError",
    "RankDeficientError",
    "Scenario",
    "SeparationError",
    "SettingResult",
    "TrialDataset",
    "ValidationError",
    "analyze",
    "evaluate_benefit",
    "load_trial",
    "oracle_pi_z",
    "oracle_roc",
    "run_bootstrap",
    "simulate_trial",
]
