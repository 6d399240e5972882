"""Shared model machinery: dynamics, priors, observation structure, registry.

A model bundles an ODE system with a prior over its parameters and a
statistical model tying solution paths to data.  Observations are flattened
into "slots": one slot per (treatment, response series, time) triple, each
with a Gaussian law whose mean comes from the path draws and whose variance
splits into a part driven by the mean and a part driven by nuisance
parameters.  The loss machinery only ever sees slot means and variance
parts, so every model plugs into the same estimators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..designs import Design, DesignSpec
from ..errors import ConfigError


@dataclass(frozen=True)
class DelayStructure:
    """One delayed state component with a constant pre-history value."""

    component: int
    history: float = 0.0


@dataclass
class OdeSystem:
    """Vector field with optional forcing function and delayed component.

    ``rhs(t, u, theta, x, ctx)`` receives batched state ``u`` (P, S), batched
    parameters ``theta`` (P, p), optional per-path constants ``x``, and a
    context dict carrying ``forcing`` (scalar) and ``lagged`` (P,) values
    when the system declares them.
    """

    ndim: int
    rhs: Callable
    t_span: tuple
    delay: Optional[DelayStructure] = None
    forcing: Optional[Callable] = None


@dataclass
class PriorDraws:
    """Batched prior draws; fields absent for a model stay ``None``."""

    theta: np.ndarray  # (P, p) estimation targets
    gamma: Optional[np.ndarray] = None  # (P, g) nuisance noise parameters
    u0: Optional[np.ndarray] = None  # (P, S) unknown initial conditions
    omega: Optional[np.ndarray] = None  # (P,) delay lags
    local_theta: Optional[np.ndarray] = None  # (P, M, p_path) per-treatment

    @property
    def size(self) -> int:
        return self.theta.shape[0]

    def row(self, i: int) -> "PriorDraws":
        pick = lambda a: None if a is None else a[i : i + 1]
        return PriorDraws(
            theta=self.theta[i : i + 1],
            gamma=pick(self.gamma),
            u0=pick(self.u0),
            omega=pick(self.omega),
            local_theta=pick(self.local_theta),
        )


@dataclass
class TreatmentPlan:
    """Solver inputs for one treatment: constants, initial state, times."""

    x: Optional[np.ndarray]  # (k,) or None
    u0: Optional[np.ndarray]  # (S,) fixed initial state, None if from prior
    times: np.ndarray  # observation times for this treatment's paths


class Model:
    """Base class; concrete models override the hooks below."""

    name: str = ""
    theta_dim: int = 0
    gamma_dim: int = 0
    theta_labels: tuple = ()
    # solver defaults, overridable through configuration
    kernel_kind: str = "squared_exponential"
    grid_n: int = 101
    alpha_rule = "n"
    lam_rule = "4h"

    @property
    def system(self) -> OdeSystem:
        raise NotImplementedError

    def design_spec(self) -> DesignSpec:
        raise NotImplementedError

    def baseline_design(self, name: str) -> Design:
        raise ConfigError(f"model {self.name!r} has no baseline named {name!r}")

    def sample_prior(self, rng: np.random.Generator, size: int) -> PriorDraws:
        raise NotImplementedError

    def path_plan(self, design: Design) -> list:
        """TreatmentPlan list; one solver batch is drawn per entry."""
        raise NotImplementedError

    def path_theta(self, draws: PriorDraws, treatment: int) -> np.ndarray:
        """Parameters the vector field sees for one treatment's paths."""
        return draws.theta

    def slot_means(self, obs_values: list, draws: PriorDraws, design: Design):
        """(P, n_slots) Gaussian means from per-treatment observation draws."""
        raise NotImplementedError

    def slot_count(self, design: Design) -> int:
        raise NotImplementedError

    def mean_var(self, means: np.ndarray) -> np.ndarray:
        """Mean-driven variance contribution per slot; zeros by default."""
        return np.zeros_like(means)

    def gamma_var(self, gamma, design: Design):
        """Nuisance-driven variance contribution, (P, n_slots); None if absent."""
        return None

    def slot_var(self, means, gamma, design: Design):
        v = self.mean_var(means)
        g = self.gamma_var(gamma, design)
        return v if g is None else v + g


_REGISTRY: dict = {}


def register_model(name: str, factory: Callable):
    _REGISTRY[name] = factory


def get_model(name: str, **options) -> Model:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ConfigError(
            f"unknown model {name!r}; available: {sorted(_REGISTRY)}"
        ) from None
    return factory(**options)


def available_models() -> list:
    return sorted(_REGISTRY)
