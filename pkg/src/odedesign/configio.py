"""Run configuration: JSON files validated against a shipped schema.

A configuration names a model, a loss, optimizer settings, and a seed; every
command derives all of its randomness from that seed, so a configuration
file pins a run completely.  Validation happens before any computation and
failures carry the offending JSON path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .ace import AceConfig
from .designs import Design, violations
from .errors import ConfigError
from .losses import LossSpec
from .models import get_model
from .models.base import Model

_SOLVER_KEYS = {
    "grid_n": "grid_n",
    "kernel": "kernel_kind",
    "lam": "lam_rule",
    "alpha": "alpha_rule",
}


def _schema() -> dict:
    text = resources.files("odedesign.data").joinpath(
        "runconfig.schema.json"
    ).read_text()
    return json.loads(text)


def read_forcing_table(path) -> np.ndarray:
    """Two-column CSV of (time, value) rows; a single header line may
    precede the numbers."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"forcing table not found: {path}")
    rows = []
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ConfigError(
                    f"{path}:{ln}: expected two comma-separated columns"
                )
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except ValueError:
                if ln == 1:
                    continue  # header
                raise ConfigError(
                    f"{path}:{ln}: could not parse {line!r} as numbers"
                ) from None
    if len(rows) < 2:
        raise ConfigError(f"forcing table {path} needs at least two rows")
    return np.array(rows)


def _build_model(entry: dict, base_dir: Path) -> Model:
    options = dict(entry.get("options", {}))
    if "forcing_table" in entry:
        options["forcing_table"] = read_forcing_table(
            base_dir / entry["forcing_table"]
        )
    try:
        model = get_model(entry["id"], **options)
    except TypeError as exc:
        raise ConfigError(
            f"model {entry['id']!r} rejected its options: {exc}"
        ) from None
    for key, attr in _SOLVER_KEYS.items():
        if key in entry.get("solver", {}):
            setattr(model, attr, entry["solver"][key])
    return model


@dataclass
class RunConfig:
    """Everything a command needs, built from one validated JSON file."""

    model: Optional[Model]  # None when the loss carries candidate models
    loss: LossSpec
    ace: AceConfig
    initial: object  # baseline name, design dict, or None
    baselines: list
    seed: int
    out: Path
    solve: Optional[dict] = None
    raw: dict = field(default_factory=dict)

    @property
    def ref_model(self) -> Model:
        return self.model if self.model is not None else self.loss.models[0]

    def resolve_design(self, source=None) -> Design:
        """A feasible design from a baseline name, a design-file path, an
        explicit coordinate dict, or the config's own initial entry."""
        source = source if source is not None else self.initial
        if source is None:
            source = "uniform"
        if isinstance(source, (str, Path)):
            text = str(source)
            if text.endswith(".json"):
                payload = _load_json(Path(text))
                return self._design_from_dict(payload, Path(text))
            return self.ref_model.baseline_design(text)
        return self._design_from_dict(source, "config design")

    def _design_from_dict(self, payload, origin) -> Design:
        if not isinstance(payload, dict) or "times" not in payload:
            raise ConfigError(f"{origin}: expected an object with 'times'")
        spec = self.ref_model.design_spec()
        box = np.asarray(payload.get("box", []), dtype=float)
        times = [np.asarray(t, dtype=float) for t in payload["times"]]
        if box.size != spec.n_box or len(times) != len(spec.groups):
            raise ConfigError(
                f"{origin}: design shape does not match the model's layout"
            )
        design = Design(spec, box, times)
        broken = violations(design)
        if broken:
            raise ConfigError(f"{origin}: infeasible design: " + "; ".join(broken))
        return design


def _load_json(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}"
        ) from None


def load_config(path, *, seed=None, out=None) -> RunConfig:
    """Parse, schema-validate, and materialize a configuration file.

    ``seed`` and ``out`` override the config's own entries.
    """
    path = Path(path)
    payload = _load_json(path)
    try:
        jsonschema.validate(payload, _schema())
    except jsonschema.ValidationError as exc:
        where = "$" + "".join(f"[{p!r}]" for p in exc.absolute_path)
        raise ConfigError(f"{path}: {where}: {exc.message}") from None

    base_dir = path.parent
    loss_entry = payload["loss"]
    kind = loss_entry["kind"]
    if kind != "MSL" and "candidates" in loss_entry:
        raise ConfigError("candidate models only apply to the MSL loss")
    if kind == "MSL" and "candidates" not in loss_entry:
        raise ConfigError("the MSL loss needs candidate models")
    if kind != "constant" and "value" in loss_entry:
        raise ConfigError("a fixed loss value only applies to the constant stub")

    if kind == "MSL":
        # candidates carry the models; a separate top-level one would drift
        if "model" in payload:
            raise ConfigError(
                "MSL configurations name their models as loss candidates"
            )
        model = None
        candidates = tuple(
            _build_model(c, base_dir) for c in loss_entry["candidates"]
        )
    else:
        if "model" not in payload:
            raise ConfigError("configuration needs a model entry")
        model = _build_model(payload["model"], base_dir)
        candidates = ()

    loss = LossSpec(
        kind=kind,
        b_outer=loss_entry["b_outer"],
        b_inner=loss_entry.get("b_inner"),
        models=candidates,
        model_priors=tuple(loss_entry.get("model_priors", ())),
        value=loss_entry.get("value", 0.0),
    )

    run_seed = int(payload["seed"] if seed is None else seed)
    ace = AceConfig(seed=run_seed, **payload.get("ace", {}))

    design_entry = payload.get("design", {})
    out_dir = Path(out if out is not None else payload.get("out", "results"))
    return RunConfig(
        model=model,
        loss=loss,
        ace=ace,
        initial=design_entry.get("initial"),
        baselines=list(design_entry.get("baselines", [])),
        seed=run_seed,
        out=out_dir,
        solve=payload.get("solve"),
        raw=payload,
    )
