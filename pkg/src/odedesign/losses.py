"""Monte Carlo estimation of the expected loss of a design.

The expected loss is approximated by an average of per-sample losses over
outer joint draws (parameters, then data).  Every per-sample loss needs a
posterior quantity, which is estimated by importance-weighting a second,
inner set of prior draws shared across all outer samples; with one solver
path draw per prior draw the whole evaluation costs outer + inner path
batches.  Four losses are supported: squared and absolute estimation error,
self-information, and model-selection error, plus a constant stub for
optimizer tests.

Likelihood products are computed in log space.  The inner log-likelihood
matrix is materialized only when it is small; otherwise blocks are rebuilt
on demand from the stored means and variances, which keeps memory flat in
the outer sample size.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .designs import Design, violations
from .errors import ConfigError, NumericalError
from .kernels import KernelSpec
from .models.base import Model, PriorDraws
from .solver import (
    SolverPrecompute,
    TimeGrid,
    alpha_from_rule,
    lam_from_rule,
    precompute,
    sample_paths,
)

_KINDS = ("SEL", "AEL", "SIL", "MSL", "constant")
_MATRIX_CAP = 4_000_000  # entries; larger matrices are rebuilt in blocks
_CHUNK_ENTRIES = 4_000_000
_HALF_TOL = 1e-9
_VAR_FLOOR = 1e-300


@dataclass(frozen=True)
class LossSpec:
    """What to estimate: loss kind and Monte Carlo budget.

    ``b_inner`` defaults to ``b_outer``.  Model-selection losses carry the
    candidate models and their prior probabilities; the constant stub
    carries its value.
    """

    kind: str
    b_outer: int
    b_inner: Optional[int] = None
    models: tuple = ()
    model_priors: tuple = ()
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}; one of {_KINDS}")
        if self.b_outer < 1 or self.inner_size < 1:
            raise ConfigError("sample sizes must be at least 1")
        if self.kind == "MSL":
            if len(self.models) < 2:
                raise ConfigError("model selection needs at least two candidates")
            pri = np.asarray(self.priors, dtype=float)
            if pri.size != len(self.models):
                raise ConfigError("one prior probability per candidate model")
            if np.any(pri < 0) or abs(pri.sum() - 1.0) > 1e-9:
                raise ConfigError("model prior probabilities must sum to one")

    @property
    def inner_size(self) -> int:
        return self.b_outer if self.b_inner is None else self.b_inner

    @property
    def priors(self) -> tuple:
        if self.model_priors:
            return tuple(self.model_priors)
        k = len(self.models)
        return tuple(1.0 / k for _ in range(k)) if k else ()


class PathCache:
    """Reuse of grid-level path draws across designs that share treatments.

    Valid only while the prior draws behind a tag stay fixed; the optimizer
    clears it at every coordinate visit.  Keys capture everything a
    treatment's paths depend on besides those draws.
    """

    def __init__(self):
        self._store = {}

    @staticmethod
    def _key(tag, treatment, plan):
        xb = b"" if plan.x is None else np.asarray(plan.x, float).tobytes()
        ub = b"prior" if plan.u0 is None else np.asarray(plan.u0, float).tobytes()
        return (tag, treatment, xb, ub)

    def get(self, tag, treatment, plan):
        return self._store.get(self._key(tag, treatment, plan))

    def put(self, tag, treatment, plan, gradients):
        self._store[self._key(tag, treatment, plan)] = gradients

    def clear(self):
        self._store.clear()


@dataclass
class SampleBank:
    """Everything the per-sample loss estimators consume.

    ``target`` and ``inner_target`` hold the estimation targets (one row per
    draw); ``y`` holds the simulated data.  The inner likelihood matrix row
    ``i`` is the slot-summed Gaussian log-density of ``y[i]`` under each
    inner draw's means and variances.
    """

    y: np.ndarray  # (B, n_slots)
    target: np.ndarray  # (B, p)
    inner_target: np.ndarray  # (B~, p)
    inner_means: np.ndarray  # (B~, n_slots)
    inner_vars: np.ndarray  # (B~, n_slots)
    outer_means: Optional[np.ndarray] = None
    outer_mean_var: Optional[np.ndarray] = None  # mean-driven part, outer rows
    inner_gamma_var: Optional[np.ndarray] = None  # nuisance part, inner rows
    outer: Optional[PriorDraws] = None
    inner: Optional[PriorDraws] = None
    design: Optional[Design] = None
    _matrix: Optional[np.ndarray] = field(default=None, repr=False)
    _lse_rows: Optional[np.ndarray] = field(default=None, repr=False)
    _log_i1: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def b_outer(self) -> int:
        return self.y.shape[0]

    @property
    def b_inner(self) -> int:
        return self.inner_means.shape[0]

    def loglik_block(self, start: int, stop: int) -> np.ndarray:
        if self._matrix is not None:
            return self._matrix[start:stop]
        return cross_loglik(self.y[start:stop], self.inner_means, self.inner_vars)

    def loglik_row(self, i: int) -> np.ndarray:
        return self.loglik_block(i, i + 1)[0]

    def weights_row(self, i: int) -> np.ndarray:
        """Normalized importance weights of the inner draws for outer ``i``."""
        row = self.loglik_row(i)
        top = row.max()
        if not np.isfinite(top):
            raise NumericalError(
                f"importance weights underflowed for outer sample {i}"
            )
        w = np.exp(row - top)
        return w / w.sum()

    def row_chunks(self):
        step = max(1, _CHUNK_ENTRIES // max(self.b_inner, 1))
        for a in range(0, self.b_outer, step):
            yield a, min(a + step, self.b_outer)

    def lse_rows(self) -> np.ndarray:
        """Row-wise log-sum-exp of the inner likelihood matrix."""
        if self._lse_rows is None:
            out = np.empty(self.b_outer)
            for a, b in self.row_chunks():
                out[a:b] = _lse(self.loglik_block(a, b))
            self._lse_rows = out
        return self._lse_rows

    def log_marginal(self) -> np.ndarray:
        """log of the inner MC estimate of the evidence, per outer sample."""
        return self.lse_rows() - np.log(self.b_inner)

    def log_self(self) -> np.ndarray:
        """log of the inner MC estimate of the data density at the outer
        parameters, nuisance integrated over the inner draws."""
        if self._log_i1 is None:
            self._log_i1 = self._build_log_self()
        return self._log_i1

    def _build_log_self(self) -> np.ndarray:
        if self.outer_means is None:
            raise ConfigError("bank was built without outer means")
        mv = self.outer_mean_var
        if mv is None:
            mv = np.zeros_like(self.outer_means)
        gv = self.inner_gamma_var
        resid = self.y - self.outer_means
        if gv is None:
            # no nuisance parameters: a single exact likelihood term
            v = np.maximum(mv, _VAR_FLOOR)
            return -0.5 * np.sum(np.log(2.0 * np.pi * v) + resid**2 / v, axis=1)
        if not np.any(mv):
            # variance free of the outer mean: same matmul form as the matrix
            v = np.maximum(gv, _VAR_FLOOR)
            inv = 1.0 / v
            const = np.sum(np.log(2.0 * np.pi * v), axis=1)
            mat = -0.5 * (resid**2 @ inv.T + const[None, :])
            return _lse(mat) - np.log(self.b_inner)
        out = np.empty(self.b_outer)
        step = max(1, _CHUNK_ENTRIES // max(self.b_inner * self.y.shape[1], 1))
        for a in range(0, self.b_outer, step):
            b = min(a + step, self.b_outer)
            v = np.maximum(mv[a:b, None, :] + gv[None, :, :], _VAR_FLOOR)
            ll = -0.5 * np.sum(
                np.log(2.0 * np.pi * v) + resid[a:b, None, :] ** 2 / v, axis=2
            )
            out[a:b] = _lse(ll)
        return out - np.log(self.b_inner)


@dataclass
class LossEstimate:
    """Estimate with its Monte Carlo standard error; unpacks as a pair."""

    estimate: float
    std_error: float
    per_sample: Optional[np.ndarray] = None
    bank: Optional[SampleBank] = None

    def __iter__(self):
        yield self.estimate
        yield self.std_error


def gaussian_loglik(y, mean, var):
    """Elementwise Gaussian log-density.

    Zero variance is a point mass: exact agreement scores +inf, any
    residual scores -inf.
    """
    y = np.asarray(y, dtype=float)
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    resid = y - mean
    safe = var > 0
    v = np.where(safe, var, 1.0)
    out = -0.5 * (np.log(2.0 * np.pi * v) + resid * resid / v)
    degenerate = np.where(resid == 0.0, np.inf, -np.inf)
    return np.where(safe, out, degenerate)


def cross_loglik(y, means, vars_):
    """(B, M) slot-summed log-likelihood of each y row under each column law.

    Matmul form; variances are floored at a denormal-scale constant so a
    zero-variance slot degrades to -inf rows instead of NaN.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    v = np.maximum(np.atleast_2d(np.asarray(vars_, dtype=float)), _VAR_FLOOR)
    m = np.atleast_2d(np.asarray(means, dtype=float))
    inv = 1.0 / v
    with np.errstate(over="ignore"):
        quad = y**2 @ inv.T - 2.0 * (y @ (m * inv).T) + np.sum(m * m * inv, axis=1)
        return -0.5 * (quad + np.sum(np.log(2.0 * np.pi * v), axis=1))


def _lse(mat: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp that passes -inf rows through quietly."""
    top = mat.max(axis=1)
    finite = np.isfinite(top)
    out = np.full(mat.shape[0], -np.inf)
    if np.any(finite):
        shifted = np.exp(mat[finite] - top[finite, None])
        out[finite] = top[finite] + np.log(shifted.sum(axis=1))
    return out


def design_precompute(model: Model, design: Design) -> SolverPrecompute:
    """Solver precompute sized by the model's grid rules, with observation
    products for every treatment of the design."""
    t0, t1 = model.system.t_span
    grid = TimeGrid.regular(t0, t1, model.grid_n)
    kernel = KernelSpec(
        model.kernel_kind,
        lam_from_rule(model.lam_rule, grid),
        alpha_from_rule(model.alpha_rule, grid),
    )
    return precompute(grid, kernel, [p.times for p in model.path_plan(design)])


def _treatment_obs(model, plans, pre, draws, rng, cache, tag):
    """Observation draws per treatment, reusing cached gradients when the
    treatment's solver inputs are unchanged."""
    out = []
    for t_idx, plan in enumerate(plans):
        prod = pre.obs[t_idx]
        p = draws.size
        ndim = model.system.ndim
        if plan.u0 is not None:
            u0 = np.broadcast_to(np.asarray(plan.u0, float), (p, ndim))
        else:
            if draws.u0 is None:
                raise ConfigError("treatment needs initial values from the prior")
            u0 = draws.u0
        grads = None if cache is None else cache.get(tag, t_idx, plan)
        if grads is None:
            x = None
            if plan.x is not None:
                x = np.broadcast_to(np.asarray(plan.x, float), (p, plan.x.size))
            sub = SolverPrecompute(gridpre=pre.gridpre, obs=[prod])
            batch = sample_paths(
                sub,
                model.system,
                model.path_theta(draws, t_idx),
                u0,
                rng,
                x=x,
                omega=draws.omega,
            )
            if cache is not None:
                cache.put(tag, t_idx, plan, batch.gradients)
            out.append(batch.obs_values[0])
            continue
        mean = u0[:, None, :] + np.einsum("oN,pNs->pos", prod.weights, grads)
        z = rng.standard_normal(mean.shape)
        out.append(mean + np.einsum("ab,pbs->pas", prod.cov_chol, z))
    return out


def build_bank(
    model: Model,
    design: Design,
    pre: SolverPrecompute,
    rng: np.random.Generator,
    b_outer: int,
    b_inner: Optional[int] = None,
    *,
    draws=None,
    cache: Optional[PathCache] = None,
) -> SampleBank:
    """Draw the outer and inner samples for one expected-loss evaluation.

    ``draws`` may carry pre-drawn (outer, inner) prior samples so repeated
    evaluations share them; paths then come from ``cache`` where possible.
    """
    b_inner = b_outer if b_inner is None else b_inner
    plans = model.path_plan(design)
    if len(plans) != len(pre.obs):
        raise ConfigError("precompute does not match the design's treatments")
    if draws is None:
        outer = model.sample_prior(rng, b_outer)
        inner = model.sample_prior(rng, b_inner)
    else:
        outer, inner = draws
    outer_obs = _treatment_obs(model, plans, pre, outer, rng, cache, "outer")
    inner_obs = _treatment_obs(model, plans, pre, inner, rng, cache, "inner")
    outer_means = model.slot_means(outer_obs, outer, design)
    inner_means = model.slot_means(inner_obs, inner, design)
    outer_vars = model.slot_var(outer_means, outer.gamma, design)
    inner_vars = model.slot_var(inner_means, inner.gamma, design)
    y = outer_means + np.sqrt(np.maximum(outer_vars, 0.0)) * rng.standard_normal(
        outer_means.shape
    )
    bank = SampleBank(
        y=y,
        target=outer.theta,
        inner_target=inner.theta,
        inner_means=inner_means,
        inner_vars=inner_vars,
        outer_means=outer_means,
        outer_mean_var=model.mean_var(outer_means),
        inner_gamma_var=model.gamma_var(inner.gamma, design)
        if inner.gamma is not None
        else None,
        outer=outer,
        inner=inner,
        design=design,
    )
    if b_outer * b_inner <= _MATRIX_CAP:
        bank._matrix = cross_loglik(y, inner_means, inner_vars)
    return bank


def posterior_mean_hat(bank: SampleBank, i: int) -> np.ndarray:
    """Importance-weighted posterior mean of the targets for outer draw i."""
    return bank.weights_row(i) @ bank.inner_target


def _weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    order = np.argsort(values, kind="stable")
    v = values[order]
    c = np.cumsum(weights[order])
    z = int(np.count_nonzero(c <= 0.5 + _HALF_TOL))
    if z >= c.size:
        raise NumericalError("weighted median ran past the sample")
    if z > 0 and abs(c[z - 1] - 0.5) <= _HALF_TOL:
        return 0.5 * (v[z - 1] + v[z])
    return float(v[z])


def posterior_median_hat(bank: SampleBank, i: int) -> np.ndarray:
    """Component-wise weighted posterior median for outer draw i.

    The cumulative weight of the value-ordered inner draws is cut at one
    half: an exact half falls between two order statistics and returns
    their midpoint, otherwise the first draw past the cut is the median.
    """
    w = bank.weights_row(i)
    return np.array(
        [
            _weighted_median(bank.inner_target[:, l], w)
            for l in range(bank.inner_target.shape[1])
        ]
    )


def sil_hat(bank: SampleBank, i: int) -> float:
    """Self-information loss: log evidence minus log density at the truth."""
    log_i2 = bank.log_marginal()[i]
    log_i1 = bank.log_self()[i]
    if not np.isfinite(log_i1) or not np.isfinite(log_i2):
        raise NumericalError(f"density estimates underflowed for outer sample {i}")
    return float(log_i2 - log_i1)


def msl_hat(y_row, true_index: int, candidate_banks: Sequence, priors) -> float:
    """0-1 loss of posterior model choice for one data draw.

    Ties go to the lower-indexed candidate.
    """
    pri = np.asarray(priors, dtype=float)
    scores = np.empty(len(candidate_banks))
    for c, b in enumerate(candidate_banks):
        row = cross_loglik(y_row, b.inner_means, b.inner_vars)[0]
        scores[c] = _lse(row[None, :])[0] - np.log(b.b_inner) + np.log(pri[c])
    if not np.any(np.isfinite(scores)):
        raise NumericalError("model evidence underflowed in every candidate")
    return 0.0 if int(np.argmax(scores)) == int(true_index) else 1.0


def _sel_per_sample(bank: SampleBank) -> np.ndarray:
    out = np.empty(bank.b_outer)
    for a, b in bank.row_chunks():
        block = bank.loglik_block(a, b)
        top = block.max(axis=1)
        bad = np.nonzero(~np.isfinite(top))[0]
        if bad.size:
            raise NumericalError(
                f"importance weights underflowed for outer sample {a + bad[0]}"
            )
        w = np.exp(block - top[:, None])
        w /= w.sum(axis=1)[:, None]
        est = w @ bank.inner_target
        out[a:b] = np.sum((bank.target[a:b] - est) ** 2, axis=1)
    return out


def _ael_per_sample(bank: SampleBank) -> np.ndarray:
    p = bank.inner_target.shape[1]
    orders = [np.argsort(bank.inner_target[:, l], kind="stable") for l in range(p)]
    sorted_vals = [bank.inner_target[orders[l], l] for l in range(p)]
    out = np.zeros(bank.b_outer)
    for a, b in bank.row_chunks():
        block = bank.loglik_block(a, b)
        top = block.max(axis=1)
        bad = np.nonzero(~np.isfinite(top))[0]
        if bad.size:
            raise NumericalError(
                f"importance weights underflowed for outer sample {a + bad[0]}"
            )
        w = np.exp(block - top[:, None])
        w /= w.sum(axis=1)[:, None]
        for l in range(p):
            cum = np.cumsum(w[:, orders[l]], axis=1)
            v = sorted_vals[l]
            z = np.count_nonzero(cum <= 0.5 + _HALF_TOL, axis=1)
            if np.any(z >= v.size):
                raise NumericalError("weighted median ran past the sample")
            prev = cum[np.arange(z.size), np.maximum(z - 1, 0)]
            exact = (z > 0) & (np.abs(prev - 0.5) <= _HALF_TOL)
            med = np.where(
                exact, 0.5 * (v[np.maximum(z - 1, 0)] + v[z]), v[z]
            )
            out[a:b] += np.abs(bank.target[a:b, l] - med)
    return out


def _sil_per_sample(bank: SampleBank) -> np.ndarray:
    log_i2 = bank.log_marginal()
    log_i1 = bank.log_self()
    bad = np.nonzero(~(np.isfinite(log_i1) & np.isfinite(log_i2)))[0]
    if bad.size:
        raise NumericalError(
            f"density estimates underflowed for outer sample {bad[0]}"
        )
    return log_i2 - log_i1


def _msl_per_sample(loss: LossSpec, design, pre, rng):
    models = loss.models
    pri = np.asarray(loss.priors, dtype=float)
    k = len(models)
    counts = [m.slot_count(design) for m in models]
    if len(set(counts)) != 1:
        raise ConfigError("candidate models disagree on the observation layout")
    b = loss.b_outer
    b_in = loss.inner_size
    true_model = rng.choice(k, size=b, p=pri)
    y = np.empty((b, counts[0]))
    for c, mod in enumerate(models):
        idx = np.nonzero(true_model == c)[0]
        if idx.size == 0:
            continue
        plans = mod.path_plan(design)
        draws = mod.sample_prior(rng, idx.size)
        obs = _treatment_obs(mod, plans, pre, draws, rng, None, f"outer{c}")
        means = mod.slot_means(obs, draws, design)
        vars_ = mod.slot_var(means, draws.gamma, design)
        y[idx] = means + np.sqrt(np.maximum(vars_, 0.0)) * rng.standard_normal(
            means.shape
        )
    scores = np.empty((b, k))
    for c, mod in enumerate(models):
        plans = mod.path_plan(design)
        draws = mod.sample_prior(rng, b_in)
        obs = _treatment_obs(mod, plans, pre, draws, rng, None, f"inner{c}")
        means = mod.slot_means(obs, draws, design)
        vars_ = mod.slot_var(means, draws.gamma, design)
        lse = np.empty(b)
        step = max(1, _CHUNK_ENTRIES // b_in)
        for a in range(0, b, step):
            stop = min(a + step, b)
            lse[a:stop] = _lse(cross_loglik(y[a:stop], means, vars_))
        scores[:, c] = lse - np.log(b_in) + np.log(pri[c])
    dead = np.nonzero(~np.any(np.isfinite(scores), axis=1))[0]
    if dead.size:
        raise NumericalError(
            f"model evidence underflowed in every candidate for sample {dead[0]}"
        )
    chosen = np.argmax(scores, axis=1)
    return (chosen != true_model).astype(float)


def mc_expected_loss(
    loss: LossSpec,
    design: Design,
    model: Optional[Model],
    pre: SolverPrecompute,
    rng: np.random.Generator,
    *,
    return_bank: bool = False,
    draws=None,
    cache: Optional[PathCache] = None,
) -> LossEstimate:
    """Monte Carlo estimate of the expected loss with its standard error.

    Deterministic given the generator state; repeated evaluations that
    should share prior draws pass them through ``draws`` (with an optional
    path ``cache``).
    """
    broken = violations(design)
    if broken:
        raise ConfigError("infeasible design: " + "; ".join(broken))
    if loss.kind == "constant":
        per = np.full(loss.b_outer, loss.value)
        return LossEstimate(float(loss.value), 0.0, per_sample=per)
    if loss.kind == "MSL":
        per = _msl_per_sample(loss, design, pre, rng)
        return LossEstimate(*_mean_se(per), per_sample=per)
    bank = build_bank(
        model, design, pre, rng, loss.b_outer, loss.inner_size,
        draws=draws, cache=cache,
    )
    per = {
        "SEL": _sel_per_sample,
        "AEL": _ael_per_sample,
        "SIL": _sil_per_sample,
    }[loss.kind](bank)
    est, se = _mean_se(per)
    return LossEstimate(est, se, per_sample=per, bank=bank if return_bank else None)


def _mean_se(per: np.ndarray):
    est = float(per.mean())
    if per.size < 2:
        return est, 0.0
    return est, float(per.std(ddof=1) / np.sqrt(per.size))
