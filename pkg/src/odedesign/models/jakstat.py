"""Delayed JAK-STAT signalling model with a forced activation step.

Four states track cytoplasmic STAT through phosphorylation, dimerization,
and nuclear shuttling; nuclear export feeds back after an unknown lag.  The
activation rate is driven by a forcing profile known only at a table of
measurement times, interpolated with a zero-nugget GP.  Four observed series
share paths but carry separate noise scales.

Prior location values here are surrogate placeholders chosen for stable
dynamics on the published scales; they are configurable and clearly marked
as surrogates in the shipped configuration files.
"""

from __future__ import annotations

import numpy as np

from ..designs import Design, DesignSpec, TimeGroupSpec, spread_times
from ..errors import ConfigError
from .base import (
    DelayStructure,
    Model,
    OdeSystem,
    PriorDraws,
    TreatmentPlan,
    register_model,
)

_T_SPAN = (0.0, 60.0)
_RATIO_FLOOR = 1e-8

# Synthetic default forcing profile: a smooth unimodal pulse tabulated at
# sixteen times.  Stands in for measured stimulus data, which is not shipped.
DEFAULT_FORCING_TABLE = np.column_stack(
    [
        np.arange(0.0, 61.0, 4.0),
        np.exp(-(((np.arange(0.0, 61.0, 4.0) - 10.0) / 7.0) ** 2)),
    ]
)

# Surrogate prior centres (see module docstring).
_SURROGATE = {
    "activation": 0.021,
    "dimerization": 2.46,
    "import_rate": 0.11,
    "export_rate": 0.11,
    "scale_dimer": 0.33,
    "scale_total": 0.26,
    "initial_stat": 1.0,
}
_LOG_SD = 0.15
_LAG_RANGE = (3.0, 8.0)


def forcing_kappa(table: np.ndarray):
    """GP interpolant through the forcing table.

    Zero-nugget squared-exponential kernel with length scale twice the
    median gap between table times; exact at the table points.  Evaluating
    outside the tabulated range raises.
    """
    table = np.asarray(table, dtype=float)
    if table.ndim != 2 or table.shape[1] != 2 or table.shape[0] < 2:
        raise ConfigError("forcing table must be (n, 2) with at least two rows")
    t_nodes = table[:, 0]
    if np.any(np.diff(t_nodes) <= 0):
        raise ConfigError("forcing table times must be strictly increasing")
    values = table[:, 1]
    ell = 2.0 * float(np.median(np.diff(t_nodes)))
    kmat = np.exp(-((t_nodes[:, None] - t_nodes[None, :]) ** 2) / (2.0 * ell**2))
    weights = np.linalg.solve(kmat, values)
    lo, hi = t_nodes[0], t_nodes[-1]

    def interp(t):
        t = np.asarray(t, dtype=float)
        if np.any(t < lo - 1e-12) or np.any(t > hi + 1e-12):
            raise ConfigError(
                f"forcing profile queried outside its range [{lo:g}, {hi:g}]"
            )
        kvec = np.exp(-((np.atleast_1d(t)[:, None] - t_nodes[None, :]) ** 2) / (2.0 * ell**2))
        out = kvec @ weights
        return out if np.ndim(t) else float(out[0])

    interp.table = table
    interp.lengthscale = ell
    return interp


def _rhs(t, u, theta, x, ctx):
    kappa = ctx["forcing"]
    lagged = ctx["lagged"]
    act = theta[:, 0]
    dim = theta[:, 1]
    imp = theta[:, 2]
    exp_ = theta[:, 3]
    u1, u2, u3 = u[:, 0], u[:, 1], u[:, 2]
    du1 = -act * u1 * kappa + 2.0 * exp_ * lagged
    du2 = act * u1 * kappa - dim * u2 * u2
    du3 = -imp * u3 + 0.5 * dim * u2 * u2
    du4 = imp * u3 - exp_ * lagged
    return np.stack([du1, du2, du3, du4], axis=1)


class JakStatModel(Model):
    name = "jakstat"
    theta_dim = 8  # six kinetic/scale parameters, initial STAT, lag
    gamma_dim = 4
    theta_labels = (
        "activation",
        "dimerization",
        "import_rate",
        "export_rate",
        "scale_dimer",
        "scale_total",
        "initial_stat",
        "lag",
    )
    kernel_kind = "uniform"
    grid_n = 500
    alpha_rule = 8000.0
    lam_rule = 0.085

    def __init__(
        self,
        n_times: int = 16,
        min_sep: float = 1.0,
        forcing_table=None,
        prior_centres: dict | None = None,
    ):
        self.n_times = int(n_times)
        self.min_sep = float(min_sep)
        table = DEFAULT_FORCING_TABLE if forcing_table is None else forcing_table
        self.kappa = forcing_kappa(table)
        self.centres = dict(_SURROGATE)
        if prior_centres:
            unknown = set(prior_centres) - set(self.centres)
            if unknown:
                raise ConfigError(f"unknown prior centre keys: {sorted(unknown)}")
            self.centres.update(prior_centres)
        self._system = OdeSystem(
            ndim=4,
            rhs=_rhs,
            t_span=_T_SPAN,
            delay=DelayStructure(component=3, history=0.0),
            forcing=self.kappa,
        )

    @property
    def system(self) -> OdeSystem:
        return self._system

    def design_spec(self) -> DesignSpec:
        series = TimeGroupSpec(
            size=self.n_times, lo=_T_SPAN[0], hi=_T_SPAN[1], min_sep=self.min_sep
        )
        ratio_time = TimeGroupSpec(size=1, lo=_T_SPAN[0], hi=_T_SPAN[1])
        return DesignSpec(box=(), groups=(series, ratio_time))

    def baseline_design(self, name: str) -> Design:
        if name != "uniform":
            return super().baseline_design(name)
        spec = self.design_spec()
        return Design(
            spec, np.empty(0), [spread_times(spec.groups[0]), np.array([30.0])]
        )

    def sample_prior(self, rng, size):
        keys = (
            "activation",
            "dimerization",
            "import_rate",
            "export_rate",
            "scale_dimer",
            "scale_total",
            "initial_stat",
        )
        cols = [
            np.exp(np.log(self.centres[k]) + _LOG_SD * rng.standard_normal(size))
            for k in keys
        ]
        lag = rng.uniform(*_LAG_RANGE, size=size)
        theta = np.column_stack(cols + [lag])
        gamma = np.column_stack(
            [
                rng.uniform(0.0, 0.1, size=size),
                rng.uniform(0.0, 0.1, size=size),
                rng.uniform(0.0, 20.0, size=size),
                rng.uniform(0.0, 0.1, size=size),
            ]
        )
        u0 = np.zeros((size, 4))
        u0[:, 0] = theta[:, 6]
        return PriorDraws(theta=theta, gamma=gamma, u0=u0, omega=theta[:, 7])

    def path_plan(self, design):
        times = np.concatenate([design.times[0], [0.0], design.times[1]])
        return [TreatmentPlan(x=None, u0=None, times=times)]

    def slot_count(self, design):
        return 2 * design.times[0].size + 2

    def slot_means(self, obs_values, draws, design):
        obs = obs_values[0]
        n = design.times[0].size
        u1 = obs[:, :n, 0]
        u2 = obs[:, :n, 1]
        u3 = obs[:, :n, 2]
        scale_dimer = draws.theta[:, 4:5]
        scale_total = draws.theta[:, 5:6]
        dimer = scale_dimer * (u2 + 2.0 * u3)
        total = scale_total * (u1 + u2 + 2.0 * u3)
        start = obs[:, n, 0:1]
        num = obs[:, n + 1, 2]
        den = obs[:, n + 1, 1] + num
        # Path draws can put the ratio's denominator at zero; clamp its
        # magnitude so the mean stays finite and the noise model decides.
        den = np.where(np.abs(den) < _RATIO_FLOOR, np.copysign(_RATIO_FLOOR, den + (den == 0)), den)
        ratio = (num / den)[:, None]
        return np.concatenate([dimer, total, start, ratio], axis=1)

    def gamma_var(self, gamma, design):
        n = design.times[0].size
        var = gamma * gamma
        parts = [
            np.broadcast_to(var[:, 0:1], (gamma.shape[0], n)),
            np.broadcast_to(var[:, 1:2], (gamma.shape[0], n)),
            var[:, 2:3],
            var[:, 3:4],
        ]
        return np.concatenate(parts, axis=1)


register_model("jakstat", lambda **kw: JakStatModel(**kw))
