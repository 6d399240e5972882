"""Approximate coordinate exchange over designs.

One coordinate moves at a time: a handful of expected-loss evaluations
along the coordinate's feasible set train a one-dimensional emulator, the
emulated minimizer becomes the proposal, and a stochastic comparison test
on fresh loss samples decides acceptance.  The training evaluations within
a visit share prior draws and cached solver paths, so a visit pays mostly
for its two accept-test evaluations; the accept test itself always uses
fresh draws on both sides.

Multiple starts run independently; the winner is picked by a final
evaluation that reuses one seed across candidates, so the comparison sees
common randomness.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np
from scipy import stats

from . import emulator
from .designs import Design, feasible_interval, random_feasible, violations
from .errors import ConfigError, NumericalError
from .losses import (
    LossSpec,
    PathCache,
    design_precompute,
    mc_expected_loss,
)
from .streams import substream

# substream role tags, kept distinct from user-facing id tuples
_INIT, _ORDER, _TRAIN, _CURR, _PROP, _COIN, _FINAL = range(100, 107)


@dataclass(frozen=True)
class AceConfig:
    """Optimizer budget and seeding.

    ``b_train`` is the Monte Carlo size behind each emulator training
    point, ``b_test`` the size behind each side of an accept test; both
    override the loss spec's own sizes during the run.
    """

    cycles: int = 10
    starts: int = 3
    q_train: int = 20
    b_train: int = 1000
    b_test: int = 20000
    seed: int = 0
    randomize_order: bool = False

    def __post_init__(self):
        if self.cycles < 0:
            raise ConfigError("cycle count cannot be negative")
        if self.starts < 1:
            raise ConfigError("need at least one start")
        if self.q_train < 4:
            raise ConfigError("emulator training needs at least 4 points")
        if self.b_train < 1 or self.b_test < 2:
            raise ConfigError("Monte Carlo sizes too small")


@dataclass
class AceVisit:
    start: int
    cycle: int
    coord: int
    proposed: float
    p_star: float
    accepted: bool
    lbar_current: float
    lbar_proposed: float


@dataclass
class AceTrace:
    """Per-visit records plus a per-cycle running loss estimate."""

    visits: List[AceVisit] = field(default_factory=list)
    cycle_loss: List[tuple] = field(default_factory=list)  # (start, cycle, lhat)

    COLUMNS = (
        "start", "cycle", "coord", "proposed",
        "p_star", "accepted", "lbar_current", "lbar_proposed",
    )

    def as_rows(self):
        return [
            (
                v.start, v.cycle, v.coord, v.proposed,
                v.p_star, v.accepted, v.lbar_current, v.lbar_proposed,
            )
            for v in self.visits
        ]


def accept_probability(loss_current, loss_proposed) -> float:
    """Probability of keeping the proposal, from paired loss samples.

    One minus the t CDF (2B-2 degrees of freedom) at the negated
    standardized difference of sample sums.  Degenerate zero-variance
    comparisons fall back to 0.5 on equal sums, otherwise to 0 or 1.
    """
    c = np.asarray(loss_current, dtype=float)
    p = np.asarray(loss_proposed, dtype=float)
    if c.ndim != 1 or c.shape != p.shape or c.size < 2:
        raise ConfigError("accept test needs two equal-length sample vectors")
    if not (np.all(np.isfinite(c)) and np.all(np.isfinite(p))):
        raise NumericalError("accept test received non-finite loss samples")
    b = c.size
    vhat = (np.sum((c - c.mean()) ** 2) + np.sum((p - p.mean()) ** 2)) / (2 * b - 2)
    diff = c.sum() - p.sum()
    if vhat == 0.0:
        if diff == 0.0:
            return 0.5
        return 1.0 if diff > 0 else 0.0
    arg = -diff / np.sqrt(2.0 * b * vhat)
    return float(1.0 - stats.t.cdf(arg, df=2 * b - 2))


def _training_inputs(segments, q, rng) -> np.ndarray:
    """About q inputs spread over the intervals, evenly spaced with a
    five-percent jitter, degenerate intervals contributing single points."""
    total = sum(b - a for a, b in segments)
    points = []
    for a, b in segments:
        if b <= a:
            points.append(a)
            continue
        share = (b - a) / total if total > 0 else 1.0 / len(segments)
        n = max(2, int(round(q * share)))
        base = np.linspace(a, b, n)
        step = (b - a) / max(n - 1, 1)
        jit = base + rng.uniform(-0.05, 0.05, size=n) * step
        points.extend(np.clip(jit, a, b))
    return np.array(sorted(points))


def _evaluate(loss, design, model, rng, pre_builder, **kw):
    pre = pre_builder(model, design)
    return mc_expected_loss(loss, design, model, pre, rng, **kw)


def ace_run(
    model,
    loss: LossSpec,
    cfg: AceConfig,
    initial_designs: Optional[List[Design]] = None,
    pre_builder: Callable = design_precompute,
):
    """Run the optimizer; returns (best design, trace).

    Starts default to random feasible designs.  Identical configuration and
    seed reproduce the trace and the returned design exactly.
    """
    spec = model.design_spec() if model is not None else loss.models[0].design_spec()
    ref_model = model if model is not None else loss.models[0]
    loss_train = replace(loss, b_outer=cfg.b_train, b_inner=None)
    loss_test = replace(loss, b_outer=cfg.b_test, b_inner=None)
    crn = loss.kind not in ("MSL", "constant")

    starts = []
    for s in range(cfg.starts):
        if initial_designs is not None and s < len(initial_designs):
            d0 = initial_designs[s].copy()
        else:
            d0 = random_feasible(spec, substream(cfg.seed, _INIT, s))
        broken = violations(d0)
        if broken:
            raise ConfigError(f"start {s} infeasible: " + "; ".join(broken))
        starts.append(d0)

    trace = AceTrace()
    finals = [
        _run_start(
            s, d0, ref_model, loss_train, loss_test, cfg, pre_builder, trace, crn
        )
        for s, d0 in enumerate(starts)
    ]

    best_idx = 0
    best_val = np.inf
    for s, d in enumerate(finals):
        res = _evaluate(
            loss_test, d, ref_model, substream(cfg.seed, _FINAL), pre_builder
        )
        if res.estimate < best_val:
            best_val = res.estimate
            best_idx = s
    return finals[best_idx], trace


def _run_start(s, d0, model, loss_train, loss_test, cfg, pre_builder, trace, crn):
    d_curr = d0
    n_coords = d_curr.spec.n_coords
    for cycle in range(cfg.cycles):
        order = np.arange(n_coords)
        if cfg.randomize_order:
            order = substream(cfg.seed, _ORDER, s, cycle).permutation(n_coords)
        last_lhat = np.nan
        for coord in order:
            coord = int(coord)
            segments = feasible_interval(d_curr, coord)
            rng_train = substream(cfg.seed, _TRAIN, s, cycle, coord)
            inputs = _training_inputs(segments, cfg.q_train, rng_train)
            if np.unique(inputs).size < 4:
                # coordinate is pinned by the constraints; nothing to emulate
                trace.visits.append(
                    AceVisit(
                        start=s, cycle=cycle, coord=coord,
                        proposed=float(d_curr.vector[coord]),
                        p_star=0.0, accepted=False,
                        lbar_current=np.nan, lbar_proposed=np.nan,
                    )
                )
                continue
            draws = None
            cache = None
            if crn:
                draws = (
                    model.sample_prior(rng_train, loss_train.b_outer),
                    model.sample_prior(rng_train, loss_train.inner_size),
                )
                cache = PathCache()
            pairs = []
            for v in inputs:
                d_q = d_curr.replace_coord(coord, float(v))
                res = _evaluate(
                    loss_train, d_q, model, rng_train, pre_builder,
                    draws=draws, cache=cache,
                )
                pairs.append((float(v), res.estimate))
            if cache is not None:
                cache.clear()

            fit = emulator.fit(pairs)
            proposal = emulator.minimize_mean(fit, segments)
            d_prop = d_curr.replace_coord(coord, proposal)
            broken = violations(d_prop)
            if broken:
                raise NumericalError(
                    f"cycle {cycle} coordinate {coord} proposed an infeasible "
                    "design: " + "; ".join(broken)
                )

            res_c = _evaluate(
                loss_test, d_curr, model,
                substream(cfg.seed, _CURR, s, cycle, coord), pre_builder,
            )
            res_p = _evaluate(
                loss_test, d_prop, model,
                substream(cfg.seed, _PROP, s, cycle, coord), pre_builder,
            )
            p_star = accept_probability(res_c.per_sample, res_p.per_sample)
            coin = substream(cfg.seed, _COIN, s, cycle, coord).uniform()
            accepted = bool(coin < p_star)
            trace.visits.append(
                AceVisit(
                    start=s,
                    cycle=cycle,
                    coord=coord,
                    proposed=float(proposal),
                    p_star=p_star,
                    accepted=accepted,
                    lbar_current=res_c.estimate,
                    lbar_proposed=res_p.estimate,
                )
            )
            if accepted:
                d_curr = d_prop
                last_lhat = res_p.estimate
            else:
                last_lhat = res_c.estimate
        trace.cycle_loss.append((s, cycle, float(last_lhat)))
    return d_curr
