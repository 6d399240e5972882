"""End-to-end acceptance checks, one test per shipped requirement.

Each criterion is a single test, so the verbose runner's per-test line is
its pass/fail report.  Heavy protocols run at the desk scales stated in
their docstrings; scale choices that go beyond a stated protocol are
documented inline.
"""

import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

import oracles
from odedesign.ace import AceConfig, accept_probability, ace_run
from odedesign.cli import main as cli_main
from odedesign.configio import load_config
from odedesign.designs import Design, random_feasible, violations
from odedesign.kernels import (
    SQUARED_EXPONENTIAL,
    UNIFORM,
    KernelSpec,
    kernel_integrals,
    state_cov,
)
from odedesign.losses import (
    LossSpec,
    SampleBank,
    design_precompute,
    mc_expected_loss,
    msl_hat,
    posterior_mean_hat,
    posterior_median_hat,
    sil_hat,
)
from odedesign.models import get_model
from odedesign.models.compartmental import DOSE, exact_solution
from odedesign.models.placenta import PROPOSED_FETAL, PROPOSED_MATERNAL
from odedesign.solver import KernelSpec as SolverKernelSpec
from odedesign.solver import TimeGrid, precompute, sample_paths
from odedesign.streams import substream

pytestmark = pytest.mark.acceptance

ROOT = Path(__file__).resolve().parents[1]
CONFIG_DIR = ROOT / "configs"


def test_criterion_1_kernel_closed_forms_match_quadrature():
    """Antiderivative, derivative, cross, and state covariances agree with
    adaptive quadrature to 1e-8 absolute on 200 randomized cases per
    kernel, in under ten seconds."""
    t_start = time.perf_counter()
    for kind, seed in ((SQUARED_EXPONENTIAL, 11), (UNIFORM, 12)):
        rng = np.random.default_rng(seed)
        for _ in range(200):
            lam = rng.uniform(0.1, 5.0)
            alpha = rng.uniform(0.5, 50.0)
            t1, t2 = rng.uniform(-10.0, 10.0, size=2)
            t0 = rng.uniform(-12.0, min(t1, t2))
            spec = KernelSpec(kind, lam, alpha)
            got = kernel_integrals(spec, t1, t2, t0)
            assert got.antideriv == pytest.approx(
                oracles.q_by_quadrature(kind, lam, t0, t1, t2), abs=1e-8
            )
            assert got.deriv == pytest.approx(
                oracles.s_by_quadrature(kind, lam, alpha, t1, t2), abs=1e-8
            )
            assert got.cross == pytest.approx(
                oracles.w_by_quadrature(kind, lam, alpha, t0, t1, t2), abs=1e-8
            )
            assert state_cov(spec, t1, t2, t0) == pytest.approx(
                oracles.v_by_quadrature(kind, lam, alpha, t0, t1, t2), abs=1e-8
            )
    assert time.perf_counter() - t_start < 10.0


def test_criterion_2_solver_tracks_analytic_solution():
    """Compartmental paths on a 501-point grid: the 200-draw mean stays
    within 5% relative error of the closed form at 15 even times, and the
    t=24 error shrinks monotonically under grid refinement with a shared
    seed bank.  Under two minutes."""
    t_start = time.perf_counter()
    model = get_model("compartmental")
    theta_one = np.array([0.1, 1.0, 20.0])
    theta = np.tile(theta_one, (200, 1))
    u0 = np.tile([DOSE, 0.0], (200, 1))

    t_obs = np.linspace(0.5, 24.0, 15)
    grid = TimeGrid.regular(0.0, 24.0, 501)
    pre = precompute(
        grid, SolverKernelSpec("squared_exponential", 4.0 * grid.h, 501.0), [t_obs]
    )
    batch = sample_paths(pre, model.system, theta, u0, substream(7, 0))
    mean_path = batch.obs_values[0][:, :, 1].mean(axis=0)
    exact = exact_solution(theta_one, t_obs)[:, 1]
    rel = np.abs(mean_path - exact) / np.abs(exact)
    assert np.all(rel <= 0.05)

    exact_end = exact_solution(theta_one, np.array([24.0]))[0, 1]
    errs = []
    for n in (125, 250, 500):
        g = TimeGrid.regular(0.0, 24.0, n)
        p = precompute(
            g,
            SolverKernelSpec("squared_exponential", 4.0 * g.h, float(n)),
            [np.array([24.0])],
        )
        b = sample_paths(p, model.system, theta, u0, substream(99, n))
        errs.append(float(np.mean(np.abs(b.obs_values[0][:, 0, 1] - exact_end))))
    assert errs[0] > errs[1] > errs[2]
    assert time.perf_counter() - t_start < 120.0


def _toy_bank(theta, y_obs, sigma):
    return SampleBank(
        y=np.array([[y_obs]]),
        target=np.zeros((1, 1)),
        inner_target=theta[:, None],
        inner_means=theta[:, None],
        inner_vars=np.full((theta.size, 1), sigma**2),
    )


def test_criterion_3_posterior_estimator_oracles():
    """Importance-sampling mean/median agree with dense-grid quadrature on
    a 1-D toy within three standard errors over 50 replicates; the
    self-information and model-choice estimators match exhaustive
    enumeration to 1e-10."""
    sigma, y_obs = 0.2, 0.37
    grid = np.linspace(0.0, 1.0, 200001)
    dens = stats.norm.pdf(y_obs, loc=grid, scale=sigma)
    dens /= np.trapezoid(dens, grid)
    mean_ref = float(np.trapezoid(grid * dens, grid))
    cdf = np.cumsum(dens)
    cdf /= cdf[-1]
    median_ref = float(grid[np.searchsorted(cdf, 0.5)])

    means = np.empty(50)
    medians = np.empty(50)
    for r in range(50):
        theta = substream(2026, 30, r).uniform(0.0, 1.0, size=2000)
        bank = _toy_bank(theta, y_obs, sigma)
        means[r] = posterior_mean_hat(bank, 0)[0]
        medians[r] = posterior_median_hat(bank, 0)[0]
    for hats, ref in ((means, mean_ref), (medians, median_ref)):
        se = hats.std(ddof=1) / np.sqrt(50)
        assert abs(hats.mean() - ref) <= 3.0 * se

    # self-information vs enumerated mixture evidence
    rng = substream(2026, 31)
    n_in = 6
    y = rng.normal(size=(3, 2))
    outer_means = rng.normal(size=(3, 2))
    outer_mv = rng.uniform(0.5, 1.0, size=(3, 2))
    inner_means = rng.normal(size=(n_in, 2))
    gv = rng.uniform(0.5, 1.5, size=(n_in, 2))
    bank = SampleBank(
        y=y,
        target=np.zeros((3, 1)),
        inner_target=np.zeros((n_in, 1)),
        inner_means=inner_means,
        inner_vars=outer_mv.mean() + gv,
        outer_means=outer_means,
        outer_mean_var=outer_mv,
        inner_gamma_var=gv,
    )
    for i in range(3):
        ev = np.mean(
            [
                np.prod(
                    stats.norm.pdf(y[i], inner_means[j], np.sqrt(bank.inner_vars[j]))
                )
                for j in range(n_in)
            ]
        )
        at_truth = np.mean(
            [
                np.prod(
                    stats.norm.pdf(
                        y[i], outer_means[i], np.sqrt(outer_mv[i] + gv[j])
                    )
                )
                for j in range(n_in)
            ]
        )
        assert sil_hat(bank, i) == pytest.approx(
            float(np.log(ev) - np.log(at_truth)), abs=1e-10
        )

    # model choice vs brute-force evidence comparison
    bank_a = _toy_bank(np.zeros(1), 0.0, 1.0)
    bank_c = _toy_bank(np.full(1, 3.0), 0.0, 1.0)
    for y_val in np.linspace(-2.0, 5.0, 29):
        ev = np.array(
            [stats.norm.pdf(y_val, 0.0, 1.0), stats.norm.pdf(y_val, 3.0, 1.0)]
        )
        best = int(np.argmax(ev))
        for truth in (0, 1):
            got = msl_hat(np.array([y_val]), truth, [bank_a, bank_c], (0.5, 0.5))
            assert got == (0.0 if best == truth else 1.0)


def test_criterion_4_accept_test_oracle():
    """Identical samples give exactly one half; the two-sample hand case
    lands within 1e-3 of the closed-form t CDF at two degrees of
    freedom."""
    c = np.array([0.4, 1.1, 2.2])
    assert accept_probability(c, c.copy()) == 0.5
    p = accept_probability([2.0, 4.0], [1.0, 3.0])
    x = 1.0 / np.sqrt(2.0)
    oracle = 0.5 + x / (2.0 * np.sqrt(2.0 + x * x))
    assert p == pytest.approx(0.7236, abs=1e-3)
    assert p == pytest.approx(oracle, abs=1e-3)


@pytest.mark.slow
def test_criterion_5_optimized_design_dominates_uniform():
    """Squared-error design search on the compartmental model at desk
    scale (201-point grid, 500 training and 5000 test samples, 12 training
    points, 3 cycles, 2 starts): the optimized design's 20-repeat median
    loss beats the uniform design's, and the accept test on the pooled
    samples prefers the optimized design with probability above 0.9."""
    t_start = time.perf_counter()
    model = get_model("compartmental")
    model.grid_n = 201
    cfg = AceConfig(
        cycles=3, starts=2, q_train=12, b_train=500, b_test=5000, seed=2027
    )
    loss = LossSpec("SEL", b_outer=5000)
    best, trace = ace_run(model, loss, cfg)
    assert all(0.0 <= v.p_star <= 1.0 for v in trace.visits)

    pools = {}
    medians = {}
    for name, design in (("uniform", model.baseline_design("uniform")),
                         ("optimized", best)):
        pre = design_precompute(model, design)
        estimates, per = [], []
        for r in range(20):
            res = mc_expected_loss(
                loss, design, model, pre, substream(2027, 700, r)
            )
            estimates.append(res.estimate)
            per.append(res.per_sample)
        medians[name] = float(np.median(estimates))
        pools[name] = np.concatenate(per)
    assert medians["optimized"] < medians["uniform"]
    p_star = accept_probability(pools["uniform"], pools["optimized"])
    assert p_star > 0.9
    assert time.perf_counter() - t_start < 1800.0


# family name -> required minimum separation in its own time units
_MIN_SEPS = {
    "compartmental": 0.25,
    "fitzhugh_nagumo": 0.25,
    "jakstat": 1.0,
    "placenta": 5.0,
}


def _family(config_path: Path) -> str:
    return config_path.stem.split("_m")[0].rsplit("_", 1)[0]


def test_criterion_6_constraints_hold_across_shipped_configs():
    """Every shipped configuration carries its family's minimum
    separation; baseline and random designs under each satisfy bounds and
    separations; a desk-scaled optimizer pass per family keeps every
    intermediate design feasible.  (Desk scaling replaces the shipped
    Monte Carlo sizes; the constraint sets are taken verbatim.)"""
    paths = sorted(CONFIG_DIR.glob("*.json"))
    assert len(paths) == 33
    for path in paths:
        run = load_config(path)
        family = _family(path)
        spec = run.ref_model.design_spec()
        assert spec.groups[0].min_sep == _MIN_SEPS[family], path.name
        for name in run.baselines:
            assert not violations(run.ref_model.baseline_design(name)), path.name
        for k in range(3):
            d = random_feasible(spec, substream(60, hash(path.name) % 2**32, k))
            assert not violations(d), path.name

    # one desk-scaled optimizer run per family, walking the trace
    desk = {
        "compartmental_sel.json": {"n_times": 3},
        "fitzhugh_nagumo_sel.json": {"n_times": 3},
        "jakstat_sel.json": {"n_times": 3},
        "placenta_sel_m2.json": {"n_times": 3},
        "placenta_msl_m2.json": {"n_times": 3},
    }
    for name, shrink in desk.items():
        run = load_config(CONFIG_DIR / name)
        models = run.loss.models if run.loss.models else (run.model,)
        rebuilt = []
        for m in models:
            opts = {"n_times": shrink["n_times"]}
            if m.name.startswith("placenta"):
                opts["n_organs"] = 2
            if m.name == "placenta_sym":
                fresh = get_model("placenta_sym", **opts)
            else:
                fresh = get_model(m.name, **opts)
            fresh.grid_n = 121
            rebuilt.append(fresh)
        if run.loss.models:
            loss = replace(
                run.loss, b_outer=12, b_inner=None, models=tuple(rebuilt)
            )
            model = None
        else:
            loss = replace(run.loss, b_outer=12, b_inner=None)
            model = rebuilt[0]
        cfg = AceConfig(
            cycles=1, starts=1, q_train=4, b_train=12, b_test=24, seed=61
        )
        ref = rebuilt[0]
        d0 = ref.baseline_design("uniform")
        best, trace = ace_run(model, loss, cfg, initial_designs=[d0])
        d = d0
        for v in trace.visits:
            if v.accepted:
                d = d.replace_coord(v.coord, v.proposed)
            assert not violations(d), name
        assert not violations(best), name


@pytest.mark.slow
def test_criterion_7_loss_nonincreasing_in_organ_count():
    """With the model-choice loss swapped for squared error, the median of
    twenty repeat evaluations of the optimized design does not increase
    from two organs to four.

    Desk scale cuts the Monte Carlo budgets (one cycle, one start, 200
    training and 800 test samples, 250x2500 evaluation samples) but keeps
    the shipped 601-point solver grid: coarser grids inject enough path
    noise to swamp the between-organ-count effect.  Each search starts
    from rows of the practitioner-proposed conditions table.
    """
    medians = {}
    for m in (2, 4):
        model = get_model("placenta", n_organs=m, n_times=8)
        spec = model.design_spec()
        rows = np.arange(1, m + 1)
        times = model.baseline_design("uniform").times[0]
        start = Design(
            spec,
            np.concatenate([PROPOSED_MATERNAL[rows], PROPOSED_FETAL[rows]]),
            [times.copy()],
        )
        cfg = AceConfig(
            cycles=1, starts=1, q_train=6, b_train=200, b_test=800,
            seed=5151 + m,
        )
        best, _ = ace_run(
            model, LossSpec("SEL", b_outer=800), cfg, initial_designs=[start]
        )
        pre = design_precompute(model, best)
        ev = LossSpec("SEL", b_outer=250, b_inner=2500)
        ests = [
            mc_expected_loss(ev, best, model, pre, substream(5151, 800, m, r)).estimate
            for r in range(20)
        ]
        medians[m] = float(np.median(ests))
    assert medians[4] <= medians[2]


def test_criterion_8_commands_reproduce_bytes(tmp_path):
    """Each command, run twice from the same configuration and seed,
    writes byte-identical outputs."""
    payload = {
        "model": {
            "id": "compartmental",
            "options": {"n_times": 3},
            "solver": {"grid_n": 61},
        },
        "loss": {"kind": "SEL", "b_outer": 25},
        "ace": {
            "cycles": 1, "starts": 1, "q_train": 5, "b_train": 15, "b_test": 30,
        },
        "design": {"baselines": ["uniform"]},
        "solve": {"theta": [0.1, 1.0, 20.0], "u0": [400.0, 0.0], "draws": 4},
        "seed": 17,
    }
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps(payload))

    produced = {
        "solve": ["draws.csv"],
        "evaluate": ["evaluations.csv"],
        "design": ["design.json", "trace.csv", "comparison.csv"],
        "compare": ["compare.csv"],
    }
    for command, files in produced.items():
        outs = []
        for sub in ("a", "b"):
            out = tmp_path / command / sub
            argv = [command, "--config", str(cfg), "--out", str(out)]
            if command == "evaluate":
                argv += ["--repeats", "2"]
            if command == "compare":
                argv += ["uniform"]
            assert cli_main(argv) == 0
            outs.append(out)
        for name in files:
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), (
                command, name,
            )
