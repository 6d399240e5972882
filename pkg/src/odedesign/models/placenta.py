"""Placental amino-acid transfer model over multiple perfused organs.

Each treatment is one perfusion experiment: the maternal-side concentration
and the initial fetal-side load are controllable, the maternal flow constant
is fixed, and the fetal-side concentration is sampled over time.  Organs
share population kinetics through a hierarchical prior: per-organ rates sit
in a uniform band of prior-drawn relative width around population values.

The ``tie_rates`` variant forces the two exchange rates equal and is the
reduced candidate in model-selection studies.
"""

from __future__ import annotations

import numpy as np

from ..designs import BoxCoord, Design, DesignSpec, TimeGroupSpec, spread_times
from ..errors import ConfigError
from .base import Model, OdeSystem, PriorDraws, TreatmentPlan, register_model

_T_SPAN = (0.0, 600.0)
_MATERNAL_FLOW = 7.5
_RATE_BAND = (80.0, 120.0)
_AFFINITY_BAND = (0.02, 0.08)
_SPREAD_MAX = 0.05

PROPOSED_MATERNAL = np.array([0.0, 250.0, 250.0, 250.0, 1000.0, 1000.0, 1000.0])
PROPOSED_FETAL = np.array([0.0, 0.0, 250.0, 1000.0, 0.0, 250.0, 1000.0])


def _rhs(t, u, theta, x, ctx):
    cap, aff, rate_in, rate_out = (
        theta[:, 0],
        theta[:, 1],
        theta[:, 2],
        theta[:, 3],
    )
    x1, x2 = x[:, 0], x[:, 1]
    u1, u2 = u[:, 0], u[:, 1]
    pool = (
        2.0 * (x1 + x2) * (u1 + u2)
        + (1.0 + aff) * (rate_out * (x1 + x2) + rate_in * (u1 + u2))
        + 2.0 * rate_in * rate_out
    ) / cap
    du1 = (x1 * (u2 + aff * rate_out) - u1 * (x2 + aff * rate_in)) / pool
    du2 = (x2 * (u1 + aff * rate_out) - u2 * (x1 + aff * rate_in)) / pool
    return np.stack([du1, du2], axis=1)


class PlacentaModel(Model):
    gamma_dim = 1
    theta_dim = 4
    theta_labels = ("capacity", "affinity", "rate_in", "rate_out")
    kernel_kind = "squared_exponential"
    grid_n = 601
    alpha_rule = "10n"
    lam_rule = "4h"

    def __init__(
        self,
        n_organs: int = 7,
        n_times: int = 8,
        min_sep: float = 5.0,
        tie_rates: bool = False,
    ):
        if n_organs < 1:
            raise ConfigError("need at least one organ")
        self.n_organs = int(n_organs)
        self.n_times = int(n_times)
        self.min_sep = float(min_sep)
        self.tie_rates = bool(tie_rates)
        self.name = "placenta_sym" if tie_rates else "placenta"
        self._system = OdeSystem(ndim=2, rhs=_rhs, t_span=_T_SPAN)

    @property
    def system(self) -> OdeSystem:
        return self._system

    def design_spec(self) -> DesignSpec:
        box = tuple(
            BoxCoord(f"maternal[{j}]", 0.0, 1000.0) for j in range(self.n_organs)
        ) + tuple(BoxCoord(f"fetal0[{j}]", 0.0, 1000.0) for j in range(self.n_organs))
        group = TimeGroupSpec(
            size=self.n_times, lo=_T_SPAN[0], hi=_T_SPAN[1], min_sep=self.min_sep
        )
        return DesignSpec(box=box, groups=(group,))

    def baseline_design(self, name: str) -> Design:
        spec = self.design_spec()
        times = [spread_times(spec.groups[0])]
        if name == "proposed":
            if self.n_organs > PROPOSED_MATERNAL.size:
                raise ConfigError("proposed design covers at most seven organs")
            box = np.concatenate(
                [
                    PROPOSED_MATERNAL[: self.n_organs],
                    PROPOSED_FETAL[: self.n_organs],
                ]
            )
            return Design(spec, box, times)
        if name == "uniform":
            box = np.full(2 * self.n_organs, 500.0)
            return Design(spec, box, times)
        return super().baseline_design(name)

    def sample_prior(self, rng, size):
        m = self.n_organs
        lo_r, hi_r = _RATE_BAND
        lo_a, hi_a = _AFFINITY_BAND
        mid_r = 0.5 * (lo_r + hi_r)
        mid_a = 0.5 * (lo_a + hi_a)
        cap = rng.triangular(lo_r, mid_r, hi_r, size=size)
        aff = rng.triangular(lo_a, mid_a, hi_a, size=size)
        rate_in = rng.triangular(lo_r, mid_r, hi_r, size=size)
        if self.tie_rates:
            rate_out = rate_in
        else:
            rate_out = rng.triangular(lo_r, mid_r, hi_r, size=size)
        theta = np.column_stack([cap, aff, rate_in, rate_out])
        spread = rng.uniform(0.0, _SPREAD_MAX, size=(size, 4))
        if self.tie_rates:
            spread[:, 3] = spread[:, 2]
        offsets = rng.uniform(-1.0, 1.0, size=(size, m, 4))
        if self.tie_rates:
            offsets[:, :, 3] = offsets[:, :, 2]
        local = theta[:, None, :] * (1.0 + spread[:, None, :] * offsets)
        gamma = rng.uniform(0.0, 1.0, size=(size, 1))  # noise variance itself
        return PriorDraws(theta=theta, gamma=gamma, local_theta=local)

    def path_plan(self, design):
        m = self.n_organs
        plans = []
        for j in range(m):
            x = np.array([_MATERNAL_FLOW, design.box[j]])
            u0 = np.array([0.0, design.box[m + j]])
            plans.append(TreatmentPlan(x=x, u0=u0, times=design.times[0]))
        return plans

    def path_theta(self, draws, treatment):
        return draws.local_theta[:, treatment, :]

    def slot_count(self, design):
        return self.n_organs * design.times[0].size

    def slot_means(self, obs_values, draws, design):
        return np.concatenate([obs[:, :, 0] for obs in obs_values], axis=1)

    def gamma_var(self, gamma, design):
        n = self.slot_count(design)
        return np.broadcast_to(gamma[:, 0:1], (gamma.shape[0], n))


register_model("placenta", lambda **kw: PlacentaModel(**kw))
register_model("placenta_sym", lambda **kw: PlacentaModel(tie_rates=True, **kw))
