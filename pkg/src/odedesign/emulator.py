"""One-dimensional emulation of the expected loss along a design coordinate.

A squared-exponential GP with a noise term is fit to a handful of noisy
Monte Carlo loss evaluations; its predictive mean stands in for the loss
when searching a coordinate's feasible set.  Minimization is a dense grid
over the feasible intervals followed by golden-section refinement inside
the winning cell, which is robust to the multimodal slices these losses
produce.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize

from .errors import ConfigError, NumericalError

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
_GRID_POINTS = 1000


@dataclass
class EmulatorFit:
    """Fitted GP: training data, hyperparameters, cached factorization."""

    inputs: np.ndarray
    values: np.ndarray
    signal_var: float
    lengthscale: float
    noise_var: float
    offset: float  # training mean, added back to predictions
    _chol: tuple
    _alpha: np.ndarray

    def _kvec(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        d = x[:, None] - self.inputs[None, :]
        return self.signal_var * np.exp(-0.5 * (d / self.lengthscale) ** 2)

    def predict_mean(self, x):
        k = self._kvec(x)
        out = self.offset + k @ self._alpha
        return out if np.ndim(x) else float(out[0])

    def predict_sd(self, x):
        """Predictive standard deviation of a new observation at ``x``."""
        k = self._kvec(x)
        solved = cho_solve(self._chol, k.T)
        var = self.signal_var + self.noise_var - np.sum(k * solved.T, axis=1)
        out = np.sqrt(np.maximum(var, 0.0))
        return out if np.ndim(x) else float(out[0])


def _kernel_matrix(x, signal_var, lengthscale, noise_var):
    d = x[:, None] - x[None, :]
    k = signal_var * np.exp(-0.5 * (d / lengthscale) ** 2)
    return k + noise_var * np.eye(x.size)


def _nlml(params, x, z):
    sf2, ell, sn2 = np.exp(params)
    k = _kernel_matrix(x, sf2, ell, sn2)
    try:
        c = cho_factor(k, lower=True)
    except np.linalg.LinAlgError:
        return 1e300
    alpha = cho_solve(c, z)
    logdet = 2.0 * np.sum(np.log(np.diag(c[0])))
    val = 0.5 * (z @ alpha + logdet + x.size * np.log(2.0 * np.pi))
    return val if np.isfinite(val) else 1e300


def fit(points, hyperparams=None) -> EmulatorFit:
    """Fit the emulator to (input, value) pairs.

    Hyperparameters come from the best of five marginal-likelihood
    optimizations started at spread-out initial values; if every start
    fails, a fixed fallback (length scale a tenth of the input range,
    noise a tenth of the value variance) is used.  ``hyperparams`` as
    (signal_var, lengthscale, noise_var) skips the fit entirely.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ConfigError("training points must be (input, value) pairs")
    x = pts[:, 0]
    z = pts[:, 1]
    if np.unique(x).size < 4:
        raise ConfigError("emulator needs at least 4 distinct training inputs")
    offset = float(z.mean())
    zc = z - offset
    span = float(x.max() - x.min())
    var_z = float(zc.var())

    if hyperparams is not None:
        sf2, ell, sn2 = (float(v) for v in hyperparams)
    elif var_z == 0.0:
        # constant data: any hyperparameters predict the constant
        sf2, ell, sn2 = 1e-12, max(span, 1.0) / 10.0, 1e-12
    else:
        sf2, ell, sn2 = _fit_hypers(x, zc, span, var_z)

    sn2 = max(sn2, 1e-10 * sf2, 1e-30)
    k = _kernel_matrix(x, sf2, ell, sn2)
    try:
        chol = cho_factor(k, lower=True)
    except np.linalg.LinAlgError:
        raise NumericalError("emulator covariance factorization failed")
    alpha = cho_solve(chol, zc)
    return EmulatorFit(
        inputs=x.copy(),
        values=z.copy(),
        signal_var=sf2,
        lengthscale=ell,
        noise_var=sn2,
        offset=offset,
        _chol=chol,
        _alpha=alpha,
    )


def _fit_hypers(x, zc, span, var_z):
    span = max(span, 1e-12)
    inits = [
        (var_z, span / 20.0, 0.05 * var_z),
        (var_z, span / 10.0, 0.10 * var_z),
        (var_z, span / 3.0, 0.02 * var_z),
        (0.5 * var_z, span, 0.10 * var_z),
        (2.0 * var_z, span / 50.0, 0.20 * var_z),
    ]
    lo = np.log([1e-6 * var_z, 1e-3 * span, 1e-8 * var_z])
    hi = np.log([1e3 * var_z, 1e1 * span, 1e1 * var_z])
    best = None
    for init in inits:
        res = minimize(
            _nlml,
            np.log(init),
            args=(x, zc),
            method="L-BFGS-B",
            bounds=list(zip(lo, hi)),
        )
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        return var_z, span / 10.0, 0.1 * var_z
    return tuple(np.exp(best.x))


def _golden_refine(f, a, b, iters=60):
    if b <= a:
        return a
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
        if b - a < 1e-12 * max(1.0, abs(a) + abs(b)):
            break
    return 0.5 * (a + b)


def minimize_mean(fit_: EmulatorFit, feasible) -> float:
    """Minimizer of the predictive mean over a union of closed intervals.

    Grid search with about a thousand points spread over the intervals in
    proportion to their length, then golden-section refinement within the
    winning grid cell.  The result always lies in one of the intervals.
    """
    segments = [(float(a), float(b)) for a, b in feasible if b >= a]
    if not segments:
        raise ConfigError("empty feasible set for emulator minimization")
    total = sum(b - a for a, b in segments)
    grids = []
    for a, b in segments:
        if b == a:
            grids.append(np.array([a]))
            continue
        share = (b - a) / total if total > 0 else 1.0 / len(segments)
        n = max(2, int(round(_GRID_POINTS * share)))
        grids.append(np.linspace(a, b, n))
    best_val = np.inf
    best = None  # (segment index, grid, position)
    for s_idx, g in enumerate(grids):
        vals = fit_.predict_mean(g)
        vals = np.atleast_1d(vals)
        pos = int(np.argmin(vals))
        if vals[pos] < best_val:
            best_val = float(vals[pos])
            best = (s_idx, g, pos)
    s_idx, g, pos = best
    if g.size == 1:
        return float(g[0])
    lo = g[max(pos - 1, 0)]
    hi = g[min(pos + 1, g.size - 1)]
    refined = _golden_refine(lambda v: fit_.predict_mean(v), lo, hi)
    refined = min(max(refined, lo), hi)
    cand = np.array([refined, g[pos]])
    vals = np.atleast_1d(fit_.predict_mean(cand))
    return float(cand[int(np.argmin(vals))])
