import numpy as np
import pytest

from odedesign.emulator import EmulatorFit, fit, minimize_mean
from odedesign.errors import ConfigError
from odedesign.streams import substream

from oracles import gp_predict_oracle


def _pairs(x, z):
    return np.column_stack([x, z])


class TestFit:
    def test_constant_data_predicts_the_constant(self):
        x = np.linspace(0.0, 10.0, 8)
        f = fit(_pairs(x, np.full(8, 3.7)))
        q = np.linspace(0.0, 10.0, 41)
        assert np.allclose(f.predict_mean(q), 3.7, atol=1e-6)

    def test_training_values_within_one_predictive_sd(self):
        # exact containment for clean data; raw calibration for noisy data,
        # where a third of the residuals may legitimately pass one sd
        x = np.linspace(0.0, 5.0, 15)
        clean = fit(_pairs(x, (x - 2.0) ** 2))
        resid = np.abs(clean.predict_mean(x) - (x - 2.0) ** 2)
        assert np.all(resid <= clean.predict_sd(x))

        rng = substream(20, 0)
        z = np.sin(x) + 0.05 * rng.standard_normal(15)
        noisy = fit(_pairs(x, z))
        inside = np.abs(noisy.predict_mean(x) - z) <= noisy.predict_sd(x)
        assert inside.mean() >= 0.6

    def test_fixed_hypers_match_dense_oracle(self):
        rng = substream(20, 1)
        x = rng.uniform(0.0, 8.0, size=12)
        z = np.cos(x) + 0.1 * rng.standard_normal(12)
        sf2, ell, sn2 = 1.3, 0.9, 0.02
        f = fit(_pairs(x, z), hyperparams=(sf2, ell, sn2))
        q = np.linspace(-1.0, 9.0, 50)
        ref = gp_predict_oracle(x, z, sf2, ell, sn2, q)
        assert np.allclose(f.predict_mean(q), ref, atol=1e-8)

    def test_reordering_training_points_changes_nothing(self):
        rng = substream(20, 2)
        x = np.linspace(0.0, 6.0, 10)
        z = (x - 3.0) ** 2 + 0.1 * rng.standard_normal(10)
        perm = rng.permutation(10)
        a = fit(_pairs(x, z), hyperparams=(1.0, 1.0, 0.05))
        b = fit(_pairs(x[perm], z[perm]), hyperparams=(1.0, 1.0, 0.05))
        q = np.linspace(0.0, 6.0, 30)
        assert np.allclose(a.predict_mean(q), b.predict_mean(q), atol=1e-10)

    def test_too_few_distinct_inputs_rejected(self):
        with pytest.raises(ConfigError, match="distinct"):
            fit(_pairs([0.0, 0.0, 1.0, 2.0], [1.0, 1.0, 2.0, 3.0]))

    def test_noise_floor_applied(self):
        x = np.linspace(0.0, 1.0, 6)
        f = fit(_pairs(x, x), hyperparams=(1.0, 0.5, 0.0))
        assert f.noise_var >= 1e-10 * f.signal_var


class TestMinimizeMean:
    def test_quadratic_vertex_recovered(self):
        vertex = 2.6
        x = np.linspace(0.0, 10.0, 20)
        z = (x - vertex) ** 2
        f = fit(_pairs(x, z))
        d = minimize_mean(f, [(0.0, 10.0)])
        assert abs(d - vertex) <= 10.0 / 100.0

    def test_increasing_data_picks_left_endpoint(self):
        x = np.linspace(1.0, 9.0, 12)
        f = fit(_pairs(x, 3.0 * x))
        d = minimize_mean(f, [(1.0, 9.0)])
        assert d == pytest.approx(1.0, abs=1e-6)

    def test_minimum_found_in_second_interval(self):
        x = np.linspace(0.0, 10.0, 25)
        z = (x - 7.0) ** 2
        f = fit(_pairs(x, z))
        d = minimize_mean(f, [(0.0, 2.0), (6.0, 10.0)])
        assert 6.0 <= d <= 10.0
        assert abs(d - 7.0) <= 0.2

    def test_result_always_feasible_on_random_unions(self):
        rng = substream(20, 3)
        x = np.linspace(0.0, 10.0, 18)
        z = np.sin(1.7 * x) + 0.05 * rng.standard_normal(18)
        f = fit(_pairs(x, z))
        for _ in range(25):
            cuts = np.sort(rng.uniform(0.0, 10.0, size=4))
            segs = [(cuts[0], cuts[1]), (cuts[2], cuts[3])]
            d = minimize_mean(f, segs)
            assert any(a - 1e-12 <= d <= b + 1e-12 for a, b in segs)

    def test_degenerate_point_interval(self):
        x = np.linspace(0.0, 4.0, 9)
        f = fit(_pairs(x, (x - 1.0) ** 2))
        d = minimize_mean(f, [(3.5, 3.5)])
        assert d == 3.5

    def test_empty_feasible_set_rejected(self):
        x = np.linspace(0.0, 4.0, 9)
        f = fit(_pairs(x, x))
        with pytest.raises(ConfigError, match="empty"):
            minimize_mean(f, [])

    def test_added_low_point_does_not_raise_minimum(self):
        rng = substream(20, 4)
        x = np.linspace(0.0, 10.0, 16)
        z = (x - 4.0) ** 2 + 0.2 * rng.standard_normal(16)
        f1 = fit(_pairs(x, z))
        d1 = minimize_mean(f1, [(0.0, 10.0)])
        m1 = f1.predict_mean(d1)
        x_new = 5.5
        z_new = f1.predict_mean(x_new) - 1.0
        f2 = fit(_pairs(np.append(x, x_new), np.append(z, z_new)))
        d2 = minimize_mean(f2, [(0.0, 10.0)])
        m2 = f2.predict_mean(d2)
        noise_sd = np.sqrt(max(f1.noise_var, f2.noise_var))
        assert m2 <= m1 + 3.0 * noise_sd
