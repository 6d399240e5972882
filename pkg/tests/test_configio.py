"""Configuration loading: schema, model building, shipped configs."""

import json
from pathlib import Path

import numpy as np
import pytest

from odedesign.configio import load_config, read_forcing_table
from odedesign.designs import violations
from odedesign.errors import ConfigError

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def _write(tmp_path, payload):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(payload))
    return path


class TestForcingTable:
    def test_header_line_is_skipped(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("t,kappa\n0.0,1.0\n4.0,0.5\n")
        table = read_forcing_table(path)
        assert table.shape == (2, 2)
        assert table[1, 1] == 0.5

    def test_headerless_file_reads_fully(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("0.0,1.0\n4.0,0.5\n8.0,0.25\n")
        assert read_forcing_table(path).shape == (3, 2)

    def test_bad_row_reports_line(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("t,kappa\n0.0,1.0\n4.0,oops\n")
        with pytest.raises(ConfigError, match=":3:"):
            read_forcing_table(path)

    def test_three_columns_rejected(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("0.0,1.0,2.0\n")
        with pytest.raises(ConfigError, match="two"):
            read_forcing_table(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            read_forcing_table(tmp_path / "absent.csv")


class TestLoadConfig:
    def test_solver_overrides_apply(self, tmp_path):
        cfg = _write(
            tmp_path,
            {
                "model": {
                    "id": "compartmental",
                    "solver": {"grid_n": 77, "lam": "2h", "alpha": 123.0},
                },
                "loss": {"kind": "SEL", "b_outer": 10},
                "seed": 1,
            },
        )
        run = load_config(cfg)
        assert run.model.grid_n == 77
        assert run.model.lam_rule == "2h"
        assert run.model.alpha_rule == 123.0

    def test_seed_and_out_overrides(self, tmp_path):
        cfg = _write(
            tmp_path,
            {
                "model": {"id": "compartmental"},
                "loss": {"kind": "SEL", "b_outer": 10},
                "seed": 1,
                "out": "somewhere",
            },
        )
        run = load_config(cfg, seed=42, out="elsewhere")
        assert run.seed == 42
        assert run.ace.seed == 42
        assert str(run.out) == "elsewhere"

    def test_unknown_model_option_rejected(self, tmp_path):
        cfg = _write(
            tmp_path,
            {
                "model": {"id": "compartmental", "options": {"bogus": 1}},
                "loss": {"kind": "SEL", "b_outer": 10},
                "seed": 1,
            },
        )
        with pytest.raises(ConfigError, match="rejected its options"):
            load_config(cfg)

    def test_msl_with_top_level_model_rejected(self, tmp_path):
        cfg = _write(
            tmp_path,
            {
                "model": {"id": "placenta"},
                "loss": {
                    "kind": "MSL",
                    "b_outer": 10,
                    "candidates": [{"id": "placenta"}, {"id": "placenta_sym"}],
                },
                "seed": 1,
            },
        )
        with pytest.raises(ConfigError, match="candidates"):
            load_config(cfg)

    def test_msl_builds_candidates(self, tmp_path):
        cfg = _write(
            tmp_path,
            {
                "loss": {
                    "kind": "MSL",
                    "b_outer": 10,
                    "candidates": [
                        {"id": "placenta", "options": {"n_organs": 2}},
                        {"id": "placenta_sym", "options": {"n_organs": 2}},
                    ],
                },
                "seed": 1,
            },
        )
        run = load_config(cfg)
        assert run.model is None
        assert len(run.loss.models) == 2
        assert run.loss.models[1].tie_rates
        assert run.ref_model is run.loss.models[0]

    def test_explicit_initial_design_resolves(self, tmp_path):
        cfg = _write(
            tmp_path,
            {
                "model": {"id": "compartmental", "options": {"n_times": 3}},
                "loss": {"kind": "SEL", "b_outer": 10},
                "design": {"initial": {"times": [[1.0, 8.0, 20.0]]}},
                "seed": 1,
            },
        )
        design = load_config(cfg).resolve_design()
        assert np.array_equal(design.times[0], [1.0, 8.0, 20.0])


class TestShippedConfigs:
    def test_every_config_loads_and_baselines_are_feasible(self):
        paths = sorted(CONFIG_DIR.glob("*.json"))
        assert len(paths) == 33
        for path in paths:
            run = load_config(path)
            for name in run.baselines:
                assert not violations(run.ref_model.baseline_design(name)), path

    def test_forcing_table_matches_interpolant_contract(self):
        table = read_forcing_table(CONFIG_DIR / "jakstat_forcing.csv")
        assert np.all(np.diff(table[:, 0]) > 0)
        assert table[0, 0] == 0.0 and table[-1, 0] == 60.0
