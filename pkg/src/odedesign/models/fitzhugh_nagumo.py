"""FitzHugh-Nagumo oscillator with voltage observations.

Stiff-ish nonlinear benchmark: the voltage component is observed under
homoscedastic noise whose standard deviation is a nuisance parameter.
"""

from __future__ import annotations

import numpy as np

from ..designs import Design, DesignSpec, TimeGroupSpec, spread_times
from .base import Model, OdeSystem, PriorDraws, TreatmentPlan, register_model

_T_SPAN = (0.0, 20.0)
_U0 = np.array([-1.0, 1.0])


def _rhs(t, u, theta, x, ctx):
    v, w = u[:, 0], u[:, 1]
    a, b, c = theta[:, 0], theta[:, 1], theta[:, 2]
    dv = c * (v - v**3 / 3.0 + w)
    dw = -(v - a + b * w) / c
    return np.stack([dv, dw], axis=1)


class FitzHughNagumoModel(Model):
    name = "fitzhugh_nagumo"
    theta_dim = 3
    gamma_dim = 1
    theta_labels = ("rest_offset", "recovery_gain", "timescale")
    kernel_kind = "uniform"
    grid_n = 200
    alpha_rule = "n"
    lam_rule = "4h"

    def __init__(self, n_times: int = 21, min_sep: float = 0.25):
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
        theta = np.column_stack(
            [
                rng.uniform(0.0, 1.0, size=size),
                rng.uniform(0.0, 1.0, size=size),
                rng.uniform(1.0, 5.0, size=size),
            ]
        )
        gamma = rng.uniform(0.5, 1.0, size=(size, 1))
        return PriorDraws(theta=theta, gamma=gamma)

    def path_plan(self, design):
        return [TreatmentPlan(x=None, u0=_U0.copy(), times=design.times[0])]

    def slot_count(self, design):
        return design.times[0].size

    def slot_means(self, obs_values, draws, design):
        return obs_values[0][:, :, 0]

    def gamma_var(self, gamma, design):
        sd = gamma[:, 0:1]
        return np.broadcast_to(sd * sd, (gamma.shape[0], design.times[0].size))


register_model("fitzhugh_nagumo", lambda **kw: FitzHughNagumoModel(**kw))
