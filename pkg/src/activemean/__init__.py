"""Sequential prediction-powered mean estimation with budgeted label queries."""
from .data import CsvSchema, Dataset, SyntheticConfig, generate_synthetic, load_csv, permute
from .estimator import (ConfidenceInterval, EstimatorState, confidence_interval, plug_in_variance,
                        unbiasedness_check)
from .harness import ExperimentConfig, TrialResult, aggregate, emit, run_experiment, run_trial
from .models import ModelBundle
from .policy import (FtrlState, MixtureConfig, PolicyContext, ftrl_observe, ftrl_probability,
                     mixture_probability, regret, regret_upper_bound, uniform_probability)

__version__ = "0.1.0"

__all__ = [
    "CsvSchema", "Dataset", "SyntheticConfig", "generate_synthetic", "load_csv", "permute",
    "ConfidenceInterval", "EstimatorState", "confidence_interval", "plug_in_variance",
    "unbiasedness_check", "ExperimentConfig", "TrialResult", "aggregate", "emit",
    "run_experiment", "run_trial", "ModelBundle", "FtrlState", "MixtureConfig", "PolicyContext",
    "ftrl_observe", "ftrl_probability", "mixture_probability", "regret", "regret_upper_bound",
    "uniform_probability",
]
