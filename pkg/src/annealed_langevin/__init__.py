"""Annealed Langevin sampling along analytic paths for Gaussian-mixture targets."""

__version__ = "0.1.0"

from .targets import GaussianMixture, TargetConstants, estimate_constants  # noqa: E402
from .paths import (  # noqa: E402
    ConvolutionPath, DazPath, DilationPath, IdentityPath, LinearGaussianLikelihood,
    PosteriorPath, ProxSettings, TemperingPath, make_path,
)
from .schedules import Schedule, StepPolicy, next_step, tau_at  # noqa: E402
from .sampler import Ensemble, InitSpec, RunPlan, em_step, run  # noqa: E402
from .metrics import HistogramSpec, histogram_kl, marginal_kl, theory_bound  # noqa: E402

__all__ = [
    "GaussianMixture", "TargetConstants", "estimate_constants",
    "ConvolutionPath", "DazPath", "DilationPath", "IdentityPath", "LinearGaussianLikelihood",
    "PosteriorPath", "ProxSettings", "TemperingPath", "make_path",
    "Schedule", "StepPolicy", "next_step", "tau_at",
    "Ensemble", "InitSpec", "RunPlan", "em_step", "run",
    "HistogramSpec", "histogram_kl", "marginal_kl", "theory_bound",
]
