"""Time-series latent diffusion with posterior-collapse diagnostics.

The package provides a small reverse-mode autodiff substrate, sequence
encoders/decoders with Gaussian heads, denoising-diffusion machinery over
latents, dependency-measure diagnostics, the collapse-free training
framework, and an experiment harness with a CLI front end.
"""

__version__ = "0.1.0"

from .series import TimeSeries
from .datasets import Dataset, gen_synthetic, load_csv, save_csv, shuffle_series
from .evalmetrics import wasserstein_eval
from .depmeas import (DependencyProfile, MeasureRequest, ProfileSummary,
                      aggregate_profiles, dependency_measure,
                      dependency_profile)
from .diffusion import NoiseSchedule, ReverseModel, make_schedule
from .experiment import ExperimentConfig, ModelBundle, run_experiment
from .training import BaselineConfig, NewFrameworkConfig

__all__ = [
    "TimeSeries", "Dataset", "gen_synthetic", "load_csv", "save_csv",
    "shuffle_series", "wasserstein_eval", "DependencyProfile",
    "MeasureRequest", "ProfileSummary", "aggregate_profiles",
    "dependency_measure", "dependency_profile", "NoiseSchedule",
    "ReverseModel", "make_schedule", "ExperimentConfig", "ModelBundle",
    "run_experiment", "BaselineConfig", "NewFrameworkConfig", "__version__",
]
