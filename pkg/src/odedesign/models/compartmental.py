"""Two-compartment dosing model with an analytic solution.

A fixed dose enters a depot compartment and transfers into a measured
compartment.  Only the measured concentration is observed, with noise whose
variance grows with the signal.  The closed-form solution makes this the
main correctness benchmark for the path sampler.
"""

from __future__ import annotations

import numpy as np

from ..designs import BoxCoord, Design, DesignSpec, TimeGroupSpec, spread_times
from ..errors import ConfigError
from .base import Model, OdeSystem, PriorDraws, TreatmentPlan, register_model

DOSE = 400.0
_T_SPAN = (0.0, 24.0)
_BASE_VAR = 0.1
_SCALE_VAR = 0.01
_LOG_MEANS = np.log(np.array([0.1, 1.0, 20.0]))
_LOG_SD = np.sqrt(0.05)


def _rhs(t, u, theta, x, ctx):
    transfer = theta[:, 0]
    elim = theta[:, 1]
    vol = theta[:, 2]
    du1 = -transfer * u[:, 0]
    du2 = (elim / vol) * u[:, 0] - elim * u[:, 1]
    return np.stack([du1, du2], axis=1)


def exact_solution(theta, t):
    """Closed-form measured concentration; rates must differ."""
    th = np.asarray(theta, dtype=float)
    transfer, elim, vol = th[0], th[1], th[2]
    if transfer == elim:
        raise ConfigError("analytic solution requires distinct rate constants")
    t = np.asarray(t, dtype=float)
    u1 = DOSE * np.exp(-transfer * t)
    u2 = (
        DOSE
        * elim
        / (vol * (elim - transfer))
        * (np.exp(-transfer * t) - np.exp(-elim * t))
    )
    return np.stack([u1, u2], axis=-1)


class CompartmentalModel(Model):
    name = "compartmental"
    theta_dim = 3
    gamma_dim = 0
    theta_labels = ("transfer_rate", "elimination_rate", "volume")
    kernel_kind = "squared_exponential"
    grid_n = 501
    alpha_rule = "n"
    lam_rule = "4h"

    def __init__(self, n_times: int = 15, min_sep: float = 0.25):
        self.n_times = int(n_times)
        self.min_sep = float(min_sep)
        self._system = OdeSystem(ndim=2, rhs=_rhs, t_span=_T_SPAN)

    @property
    def system(self) -> OdeSystem:
        return self._system

    def design_spec(self) -> DesignSpec:
        group = TimeGroupSpec(
            size=self.n_times, lo=_T_SPAN[0], hi=_T_SPAN[1], min_sep=self.min_sep
        )
        return DesignSpec(box=(), groups=(group,))

    def baseline_design(self, name: str) -> Design:
        if name != "uniform":
            return super().baseline_design(name)
        spec = self.design_spec()
        return Design(spec, np.empty(0), [spread_times(spec.groups[0])])

    def sample_prior(self, rng, size):
        theta = np.exp(
            _LOG_MEANS + _LOG_SD * rng.standard_normal(size=(size, 3))
        )
        return PriorDraws(theta=theta)

    def path_plan(self, design):
        return [
            TreatmentPlan(x=None, u0=np.array([DOSE, 0.0]), times=design.times[0])
        ]

    def slot_count(self, design):
        return design.times[0].size

    def slot_means(self, obs_values, draws, design):
        return obs_values[0][:, :, 1]

    def mean_var(self, means):
        return _BASE_VAR + _SCALE_VAR * means * means


def _factory(**options):
    return CompartmentalModel(**options)


register_model("compartmental", _factory)
