"""Bayesian optimal experimental design for ODE models with a probabilistic solver."""

from .ace import AceConfig, accept_probability, ace_run
from .configio import RunConfig, load_config
from .designs import Design, DesignSpec
from .losses import LossSpec, design_precompute, mc_expected_loss
from .models import get_model

__version__ = "0.1.0"

__all__ = [
    "AceConfig",
    "Design",
    "DesignSpec",
    "LossSpec",
    "RunConfig",
    "accept_probability",
    "ace_run",
    "design_precompute",
    "get_model",
    "load_config",
    "mc_expected_loss",
    "__version__",
]
