"""Closed-form kernel integrals against the quadrature oracle."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from odedesign.kernels import (
    SQUARED_EXPONENTIAL,
    UNIFORM,
    KernelSpec,
    cross_cov,
    deriv_cov,
    kernel_integrals,
    kernel_value,
    r_antideriv,
    state_cov,
)

import oracles


def _random_cases(kind, n, seed):
    rng = np.random.default_rng(seed)
    cases = []
    for _ in range(n):
        lam = rng.uniform(0.1, 5.0)
        t1, t2 = rng.uniform(-10.0, 10.0, size=2)
        t0 = rng.uniform(-12.0, min(t1, t2))
        cases.append((lam, t0, t1, t2))
    return cases


_EDGE_CASES = [
    # (lam, t0, t1, t2): domain-start coincidences, ties, wide kernels,
    # and a state time left of the domain start (signed antiderivative).
    (1.0, 0.0, 0.0, 3.0),
    (1.0, 0.0, 3.0, 0.0),
    (0.5, -1.0, -1.0, -1.0),
    (2.0, 0.0, 4.0, 4.0),
    (30.0, 0.0, 5.0, 2.0),
    (0.1, 0.0, 9.5, 9.6),
    (1.0, 2.0, -3.0, 1.0),
    (1.5, 2.0, -3.0, -4.0),
]


@pytest.mark.parametrize("kind", [SQUARED_EXPONENTIAL, UNIFORM])
def test_integrals_match_quadrature(kind):
    cases = _random_cases(kind, 200, seed=101 if kind == UNIFORM else 7) + _EDGE_CASES
    for lam, t0, t1, t2 in cases:
        spec = KernelSpec(kind, lam, 1.0)
        got = kernel_integrals(spec, t1, t2, t0)
        assert got.antideriv == pytest.approx(
            oracles.q_by_quadrature(kind, lam, t0, t1, t2), abs=1e-8
        )
        assert got.deriv == pytest.approx(
            oracles.s_by_quadrature(kind, lam, 1.0, t1, t2), abs=1e-8
        )
        assert got.cross == pytest.approx(
            oracles.w_by_quadrature(kind, lam, 1.0, t0, t1, t2), abs=1e-8
        )
        assert got.state == pytest.approx(
            oracles.v_by_quadrature(kind, lam, 1.0, t0, t1, t2), abs=1e-8
        )


def test_known_values_at_unit_scale():
    se = KernelSpec(SQUARED_EXPONENTIAL, 1.0, 1.0)
    assert deriv_cov(se, 2.0, 2.0) == pytest.approx(np.sqrt(np.pi), rel=1e-12)
    uni = KernelSpec(UNIFORM, 1.0, 1.0)
    assert deriv_cov(uni, 0.0, 1.0) == pytest.approx(1.0, rel=1e-12)


def test_alpha_scales_all_covariances():
    for kind in (SQUARED_EXPONENTIAL, UNIFORM):
        base = KernelSpec(kind, 0.8, 1.0)
        scaled = KernelSpec(kind, 0.8, 50.0)
        for f in (deriv_cov,):
            assert f(scaled, 1.0, 2.0) * 50.0 == pytest.approx(f(base, 1.0, 2.0))
        assert cross_cov(scaled, 1.0, 2.0, 0.0) * 50.0 == pytest.approx(
            cross_cov(base, 1.0, 2.0, 0.0)
        )
        assert state_cov(scaled, 1.0, 2.0, 0.0) * 50.0 == pytest.approx(
            state_cov(base, 1.0, 2.0, 0.0)
        )


def test_vectorized_matches_scalar():
    rng = np.random.default_rng(3)
    t1 = rng.uniform(0, 10, size=(5, 1))
    t2 = rng.uniform(0, 10, size=(1, 7))
    for kind in (SQUARED_EXPONENTIAL, UNIFORM):
        spec = KernelSpec(kind, 0.7, 3.0)
        mat = state_cov(spec, t1, t2, 0.0)
        for i in range(5):
            for j in range(7):
                assert mat[i, j] == pytest.approx(
                    float(state_cov(spec, t1[i, 0], t2[0, j], 0.0)), abs=1e-12
                )
        wm = cross_cov(spec, t1, t2, 0.0)
        for i in range(5):
            for j in range(7):
                assert wm[i, j] == pytest.approx(
                    float(cross_cov(spec, t1[i, 0], t2[0, j], 0.0)), abs=1e-12
                )


@settings(max_examples=60, deadline=None)
@given(
    kind=st.sampled_from([SQUARED_EXPONENTIAL, UNIFORM]),
    lam=st.floats(0.1, 5.0),
    t1=st.floats(-10.0, 10.0),
    t2=st.floats(-10.0, 10.0),
)
def test_symmetry_and_bounds(kind, lam, t1, t2):
    spec = KernelSpec(kind, lam, 2.0)
    t0 = -11.0
    assert deriv_cov(spec, t1, t2) == deriv_cov(spec, t2, t1)
    v12 = state_cov(spec, t1, t2, t0)
    v21 = state_cov(spec, t2, t1, t0)
    assert v12 == pytest.approx(v21, rel=1e-10, abs=1e-12)
    # diagonal dominance of a covariance pair
    v11 = state_cov(spec, t1, t1, t0)
    v22 = state_cov(spec, t2, t2, t0)
    assert v12 * v12 <= v11 * v22 * (1 + 1e-9) + 1e-12
    r = float(kernel_value(spec, t1, t2))
    assert 0.0 <= r <= 1.0


def test_state_cov_vanishes_at_domain_start():
    for kind in (SQUARED_EXPONENTIAL, UNIFORM):
        spec = KernelSpec(kind, 1.3, 4.0)
        assert state_cov(spec, 0.0, 5.0, 0.0) == pytest.approx(0.0, abs=1e-14)
        assert cross_cov(spec, 0.0, 5.0, 0.0) == pytest.approx(0.0, abs=1e-14)


def test_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec("triangle", 1.0, 1.0)
    with pytest.raises(ValueError):
        KernelSpec(UNIFORM, 0.0, 1.0)
    with pytest.raises(ValueError):
        KernelSpec(UNIFORM, 1.0, -2.0)
