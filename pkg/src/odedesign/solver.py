"""Sequential Gaussian-process solver for initial value problems.

The solver runs in two phases.  A precompute phase depends only on the time
grid and kernel: it grows a Cholesky factorization one grid point at a time,
recording the interrogation weights, step variances, and the accumulated
model-discrepancy diagonal.  A sampling phase then walks the grid once per
draw, alternating between predicting the state from past derivative
evaluations and evaluating the vector field at the predicted state.  Path
draws at arbitrary observation times come from the final conditional law and
reuse the precompute, so repeated design evaluations only pay for the cheap
observation products.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .errors import NumericalError
from .kernels import KernelSpec, cross_cov, deriv_cov, state_cov

_JITTER_START = 1e-10
_JITTER_STOP = 1e-6


@dataclass(frozen=True)
class TimeGrid:
    """Equally spaced solver grid over the problem's time span."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("grid needs at least two points")
        steps = np.diff(pts)
        if np.any(steps <= 0):
            raise ValueError("grid points must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-8, atol=0.0):
            raise ValueError("grid must be equally spaced")
        object.__setattr__(self, "points", pts)

    @classmethod
    def regular(cls, t0: float, t1: float, n: int) -> "TimeGrid":
        return cls(np.linspace(t0, t1, n))

    @property
    def n(self) -> int:
        return self.points.size

    @property
    def t0(self) -> float:
        return float(self.points[0])

    @property
    def t1(self) -> float:
        return float(self.points[-1])

    @property
    def h(self) -> float:
        return float(self.points[1] - self.points[0])


def lam_from_rule(rule, grid: TimeGrid) -> float:
    """Length-scale rule: a number, or "<k>h" for a multiple of the spacing."""
    if isinstance(rule, (int, float)):
        return float(rule)
    text = str(rule).strip().lower()
    if text.endswith("h"):
        return float(text[:-1] or 1.0) * grid.h
    return float(text)


def alpha_from_rule(rule, grid: TimeGrid) -> float:
    """Precision rule: a number, or "<k>n" for a multiple of the grid size."""
    if isinstance(rule, (int, float)):
        return float(rule)
    text = str(rule).strip().lower()
    if text.endswith("n"):
        return float(text[:-1] or 1.0) * grid.n
    return float(text)


@dataclass
class ObsProducts:
    """Conditional law of the state at a set of observation times."""

    times: np.ndarray
    weights: np.ndarray  # (n_obs, N) applied to the gradient record
    cov: np.ndarray  # (n_obs, n_obs)
    cov_chol: np.ndarray


@dataclass
class GridPrecompute:
    """Everything about the grid walk that does not involve the vector field."""

    grid: TimeGrid
    kernel: KernelSpec
    step_weights: list  # entry k-1 has length k and predicts grid point k
    step_vars: np.ndarray  # (N-1,) predictive variance per interrogation step
    discrepancy: np.ndarray  # (N,) accumulated diagonal, first entry zero
    grid_inverse: np.ndarray  # (N, N) inverse of the final interrogation system
    jitter: float
    _obs_cache: dict = field(repr=False, default_factory=dict)

    def obs_products(self, times: Sequence[float]) -> ObsProducts:
        """Observation-time weights and covariance, cached by the time tuple."""
        t = np.asarray(times, dtype=float)
        key = t.tobytes()
        hit = self._obs_cache.get(key)
        if hit is not None:
            return hit
        t0 = self.grid.t0
        w = cross_cov(self.kernel, t[:, None], self.grid.points[None, :], t0)
        d = w @ self.grid_inverse
        e = state_cov(self.kernel, t[:, None], t[None, :], t0) - d @ w.T
        e = 0.5 * (e + e.T)
        chol = _psd_cholesky(e, self.jitter)
        prod = ObsProducts(times=t, weights=d, cov=e, cov_chol=chol)
        self._obs_cache[key] = prod
        return prod


def _psd_cholesky(mat: np.ndarray, base_jitter: float) -> np.ndarray:
    """Lower Cholesky of a PSD matrix, escalating jitter before giving up."""
    scale = max(float(np.mean(np.diag(mat))), 0.0)
    if scale == 0.0:
        scale = 1.0
    eps = base_jitter
    while True:
        try:
            return cholesky(mat + eps * scale * np.eye(mat.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            pass
        eps *= 10.0
        if eps > _JITTER_STOP:
            raise NumericalError("observation covariance is not positive definite")


def _build_grid_precompute(grid: TimeGrid, kernel: KernelSpec) -> GridPrecompute:
    tau = grid.points
    n = grid.n
    t0 = grid.t0
    s_full = deriv_cov(kernel, tau[:, None], tau[None, :])
    w_full = cross_cov(kernel, tau[:, None], tau[None, :], t0)
    v_diag = state_cov(kernel, tau, tau, t0)
    s_diag_mean = float(np.mean(np.diag(s_full)))

    eps = _JITTER_START
    while True:
        out = _try_build(s_full, w_full, v_diag, eps * s_diag_mean)
        if out is not None:
            break
        eps *= 10.0
        if eps > _JITTER_STOP:
            raise NumericalError("interrogation system factorization failed")
    chol_l, weights, step_vars, discrepancy = out

    identity = np.eye(n)
    inv = solve_triangular(
        chol_l.T, solve_triangular(chol_l, identity, lower=True), lower=False
    )
    return GridPrecompute(
        grid=grid,
        kernel=kernel,
        step_weights=weights,
        step_vars=step_vars,
        discrepancy=discrepancy,
        grid_inverse=inv,
        jitter=eps,
    )


def _try_build(s_full, w_full, v_diag, jitter):
    """One incremental factorization pass at a fixed jitter level.

    The diagonal entries added at step r never change afterwards, so the
    Cholesky factor of the interrogation system grows row by row and its
    leading blocks serve every intermediate solve.
    """
    n = s_full.shape[0]
    chol_l = np.zeros((n, n))
    weights = []
    step_vars = np.zeros(n - 1)
    discrepancy = np.zeros(n)
    first = s_full[0, 0] + discrepancy[0] + jitter
    if first <= 0:
        return None
    chol_l[0, 0] = np.sqrt(first)
    for k in range(1, n):
        block = chol_l[:k, :k]
        w_vec = w_full[k, :k]
        half = solve_triangular(block, w_vec, lower=True)
        weights.append(solve_triangular(block.T, half, lower=False))
        step_vars[k - 1] = max(v_diag[k] - half @ half, 0.0)
        s_vec = s_full[:k, k]
        l_row = solve_triangular(block, s_vec, lower=True)
        raw = s_full[k, k] - l_row @ l_row
        discrepancy[k] = max(raw, 0.0)
        pivot = s_full[k, k] + discrepancy[k] + jitter - l_row @ l_row
        if pivot <= 0:
            return None
        chol_l[k, :k] = l_row
        chol_l[k, k] = np.sqrt(pivot)
    return chol_l, weights, step_vars, discrepancy


_GRID_CACHE: dict = {}


def grid_precompute(grid: TimeGrid, kernel: KernelSpec) -> GridPrecompute:
    """Cached θ-independent precompute for a (grid, kernel) pair."""
    key = (grid.points.tobytes(), kernel.kind, kernel.lam, kernel.alpha)
    hit = _GRID_CACHE.get(key)
    if hit is None:
        hit = _build_grid_precompute(grid, kernel)
        _GRID_CACHE[key] = hit
    return hit


@dataclass
class SolverPrecompute:
    """Grid precompute plus observation products for one or more time sets."""

    gridpre: GridPrecompute
    obs: list

    @property
    def grid(self) -> TimeGrid:
        return self.gridpre.grid


def precompute(
    grid: TimeGrid, kernel: KernelSpec, obs_sets: Sequence[Sequence[float]]
) -> SolverPrecompute:
    gp = grid_precompute(grid, kernel)
    for times in obs_sets:
        t = np.asarray(times, dtype=float)
        if t.size and (t.min() < grid.t0 - 1e-12 or t.max() > grid.t1 + 1e-12):
            raise ValueError("observation times fall outside the grid span")
    return SolverPrecompute(gridpre=gp, obs=[gp.obs_products(t) for t in obs_sets])


def delay_lookup_index(step: int, target_offset: float, h: float) -> np.ndarray:
    """Nearest grid index to (t - lag), capped at the newest sampled point.

    ``target_offset`` is (t - lag - t0).  Ties between two equidistant grid
    points resolve to the earlier one.
    """
    idx = np.ceil(np.asarray(target_offset) / h - 0.5).astype(np.int64)
    return np.clip(idx, 0, step)


@dataclass
class PathBatch:
    """Joint draws of solution paths for a batch of parameter sets."""

    grid_values: np.ndarray  # (P, N, S)
    gradients: np.ndarray  # (P, N, S)
    obs_values: list  # one (P, n_obs, S) array per observation set


@dataclass
class PathDraw:
    grid_values: np.ndarray  # (N, S)
    gradients: np.ndarray
    obs_values: list  # (n_obs, S) arrays


def sample_paths(
    pre: SolverPrecompute,
    system,
    theta: np.ndarray,
    u0: np.ndarray,
    rng: np.random.Generator,
    x: Optional[np.ndarray] = None,
    omega: Optional[np.ndarray] = None,
) -> PathBatch:
    """Draw one solver path per row of ``theta``.

    ``u0`` is (P, S); ``x`` holds per-path forcing constants when the system
    uses them, and ``omega`` per-path lags when the system has a delayed
    component.  Observation-time values are drawn from the conditional law in
    the same call so every path carries its own endpoint uncertainty.
    """
    gp = pre.gridpre
    tau = gp.grid.points
    n = gp.grid.n
    h = gp.grid.h
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    u0 = np.atleast_2d(np.asarray(u0, dtype=float))
    p_batch = theta.shape[0]
    s_dim = system.ndim
    if u0.shape != (p_batch, s_dim):
        raise ValueError("initial condition batch has wrong shape")

    delay = getattr(system, "delay", None)
    if delay is not None:
        if omega is None:
            raise ValueError("system has a delayed component but no lags given")
        omega = np.broadcast_to(np.asarray(omega, dtype=float), (p_batch,))

    forcing_vals = None
    if getattr(system, "forcing", None) is not None:
        forcing_vals = np.asarray(system.forcing(tau), dtype=float)

    u_hist = np.empty((p_batch, n, s_dim))
    grads = np.empty((p_batch, n, s_dim))
    u_hist[:, 0, :] = u0

    def eval_rhs(k: int, u_now: np.ndarray) -> np.ndarray:
        ctx = {}
        if forcing_vals is not None:
            ctx["forcing"] = forcing_vals[k]
        if delay is not None:
            offset = tau[k] - omega - gp.grid.t0
            idx = delay_lookup_index(k, offset, h)
            lagged = u_hist[np.arange(p_batch), idx, delay.component]
            ctx["lagged"] = np.where(offset <= 0.0, delay.history, lagged)
        val = np.asarray(system.rhs(tau[k], u_now, theta, x, ctx), dtype=float)
        if not np.all(np.isfinite(val)):
            bad = np.argwhere(~np.isfinite(val).all(axis=1))[0, 0]
            raise NumericalError(
                f"vector field returned non-finite values at step {k} "
                f"(t={tau[k]:.6g}) for theta={theta[bad].tolist()}"
            )
        return val

    grads[:, 0, :] = eval_rhs(0, u_hist[:, 0, :])
    sqrt_vars = np.sqrt(gp.step_vars)
    for k in range(1, n):
        a = gp.step_weights[k - 1]
        mean = u0 + np.einsum("r,prs->ps", a, grads[:, :k, :])
        z = rng.standard_normal((p_batch, s_dim))
        u_now = mean + sqrt_vars[k - 1] * z
        u_hist[:, k, :] = u_now
        grads[:, k, :] = eval_rhs(k, u_now)

    obs_values = []
    for prod in pre.obs:
        n_obs = prod.times.size
        mean = u0[:, None, :] + np.einsum("oN,pNs->pos", prod.weights, grads)
        z = rng.standard_normal((p_batch, n_obs, s_dim))
        obs_values.append(mean + np.einsum("ab,pbs->pas", prod.cov_chol, z))

    return PathBatch(grid_values=u_hist, gradients=grads, obs_values=obs_values)


def sample_path(pre, system, theta, u0, rng, x=None, omega=None) -> PathDraw:
    """Single-draw convenience wrapper around :func:`sample_paths`."""
    batch = sample_paths(
        pre,
        system,
        np.atleast_2d(theta),
        np.atleast_2d(u0),
        rng,
        x=None if x is None else np.atleast_2d(x),
        omega=None if omega is None else np.atleast_1d(omega),
    )
    return PathDraw(
        grid_values=batch.grid_values[0],
        gradients=batch.gradients[0],
        obs_values=[v[0] for v in batch.obs_values],
    )
