"""Covariance kernels and their convolution integrals for the probabilistic solver.

The solver models each state derivative as a process obtained by smoothing
white noise with a base kernel ``rho``: the derivative-derivative covariance
is the kernel convolved with itself, and integrating the kernel from the left
end ``t0`` of the time domain gives the state-derivative and state-state
covariances.  Writing ``q(t, s) = int_t0^t rho(v, s) dv``,

    deriv_cov(t1, t2)  = (1/alpha) int rho(t1, s) rho(t2, s) ds
    cross_cov(t1, t2)  = (1/alpha) int q(t1, s)   rho(t2, s) ds
    state_cov(t1, t2)  = (1/alpha) int q(t1, s)   q(t2, s)   ds

with the integrals over the whole real line and ``cross_cov`` taking the
state time first.  Closed forms are implemented for the squared-exponential
and uniform kernels; the test suite checks them against adaptive quadrature
of these defining integrals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import erf

SQUARED_EXPONENTIAL = "squared_exponential"
UNIFORM = "uniform"
KERNEL_KINDS = (SQUARED_EXPONENTIAL, UNIFORM)

_SQRT_PI = np.sqrt(np.pi)


@dataclass(frozen=True)
class KernelSpec:
    """Base kernel choice with length scale ``lam`` and precision ``alpha``."""

    kind: str
    lam: float
    alpha: float

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not (self.lam > 0):
            raise ValueError("length scale must be positive")
        if not (self.alpha > 0):
            raise ValueError("precision alpha must be positive")


def kernel_value(spec: KernelSpec, t1, t2):
    """Base kernel rho(t1, t2)."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    d = t1 - t2
    if spec.kind == SQUARED_EXPONENTIAL:
        return np.exp(-(d * d) / (2.0 * spec.lam**2))
    return np.where(np.abs(d) < spec.lam, 1.0, 0.0)


def r_antideriv(spec: KernelSpec, t1, t2, t0: float):
    """q(t1, t2) = int_t0^t1 rho(v, t2) dv, signed if t1 < t0."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    lam = spec.lam
    if spec.kind == SQUARED_EXPONENTIAL:
        c = lam * np.sqrt(np.pi / 2.0)
        s2 = np.sqrt(2.0) * lam
        return c * (erf((t1 - t2) / s2) + erf((t2 - t0) / s2))
    lo = np.minimum(t0, t1)
    hi = np.maximum(t0, t1)
    sgn = np.where(t1 >= t0, 1.0, -1.0)
    span = np.maximum(0.0, np.minimum(hi, t2 + lam) - np.maximum(lo, t2 - lam))
    return sgn * span


def deriv_cov(spec: KernelSpec, t1, t2):
    """Derivative-process covariance (kernel convolved with itself)."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    d = t1 - t2
    lam, alpha = spec.lam, spec.alpha
    if spec.kind == SQUARED_EXPONENTIAL:
        return (lam * _SQRT_PI / alpha) * np.exp(-(d * d) / (4.0 * lam**2))
    return np.maximum(0.0, 2.0 * lam - np.abs(d)) / alpha


def _se_g(x):
    # antiderivative of erf: G'(x) = erf(x), G even
    return x * erf(x) + np.exp(-x * x) / _SQRT_PI


def _trap_points(t_a, t_b, lam):
    """Breakpoints and height of s -> |int over [t_a, t_b] of rho(v, s) dv|.

    The overlap length of a window of halfwidth lam centred at s with the
    interval [t_a, t_b] is a trapezoid in s: zero outside (t_a - lam,
    t_b + lam), rising with slope 1, then flat at height H.
    """
    height = np.minimum(t_b - t_a, 2.0 * lam)
    p1 = t_a - lam
    p4 = t_b + lam
    return p1, p1 + height, p4 - height, p4, height


def _trap_area_upto(x, p1, p2, p3, p4, height):
    """Integral of the trapezoid from -inf to x, exact and vectorized."""
    u1 = np.clip(x, p1, p2) - p1
    u2 = np.clip(x, p2, p3) - p2
    u3 = np.clip(x, p3, p4) - p3
    return 0.5 * u1 * u1 + height * u2 + height * u3 - 0.5 * u3 * u3


def _trap_eval(s, p1, p4, height):
    return np.maximum(0.0, np.minimum(np.minimum(s - p1, p4 - s), height))


def cross_cov(spec: KernelSpec, t1, t2, t0: float):
    """State-derivative covariance; ``t1`` is the state time."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    lam, alpha = spec.lam, spec.alpha
    if spec.kind == SQUARED_EXPONENTIAL:
        tl = 2.0 * lam
        return (np.pi * lam**2 / alpha) * (erf((t1 - t2) / tl) + erf((t2 - t0) / tl))
    lo = np.minimum(t0, t1)
    hi = np.maximum(t0, t1)
    sgn = np.where(t1 >= t0, 1.0, -1.0)
    p1, p2, p3, p4, height = _trap_points(lo, hi, lam)
    area = _trap_area_upto(t2 + lam, p1, p2, p3, p4, height) - _trap_area_upto(
        t2 - lam, p1, p2, p3, p4, height
    )
    return sgn * area / alpha


def state_cov(spec: KernelSpec, t1, t2, t0: float):
    """State-process covariance; zero when either argument equals ``t0``."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    lam, alpha = spec.lam, spec.alpha
    if spec.kind == SQUARED_EXPONENTIAL:
        tl = 2.0 * lam
        g = _se_g
        val = g((t1 - t0) / tl) + g((t2 - t0) / tl) - g((t1 - t2) / tl) - 1.0 / _SQRT_PI
        return (2.0 * np.pi * lam**3 / alpha) * val
    # Product of two trapezoids is piecewise quadratic between the union of
    # their breakpoints, so per-segment Simpson integration is exact.
    lo1 = np.minimum(t0, t1)
    hi1 = np.maximum(t0, t1)
    lo2 = np.minimum(t0, t2)
    hi2 = np.maximum(t0, t2)
    sgn = np.where(t1 >= t0, 1.0, -1.0) * np.where(t2 >= t0, 1.0, -1.0)
    a1, a2, a3, a4, h_a = _trap_points(lo1, hi1, lam)
    b1, b2, b3, b4, h_b = _trap_points(lo2, hi2, lam)
    pts = np.stack(np.broadcast_arrays(a1, a2, a3, a4, b1, b2, b3, b4), axis=-1)
    pts = np.sort(pts, axis=-1)
    acc = 0.0
    for k in range(pts.shape[-1] - 1):
        left = pts[..., k]
        right = pts[..., k + 1]
        mid = 0.5 * (left + right)
        w = right - left

        def f(s):
            return _trap_eval(s, a1, a4, h_a) * _trap_eval(s, b1, b4, h_b)

        acc = acc + (w / 6.0) * (f(left) + 4.0 * f(mid) + f(right))
    return sgn * acc / alpha


class ConvIntegrals(NamedTuple):
    antideriv: np.ndarray
    deriv: np.ndarray
    cross: np.ndarray
    state: np.ndarray


def kernel_integrals(spec: KernelSpec, t1, t2, t0: float) -> ConvIntegrals:
    """All four integral values at (t1, t2) with domain start ``t0``."""
    return ConvIntegrals(
        r_antideriv(spec, t1, t2, t0),
        deriv_cov(spec, t1, t2),
        cross_cov(spec, t1, t2, t0),
        state_cov(spec, t1, t2, t0),
    )
