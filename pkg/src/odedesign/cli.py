"""Command line front end.

Subcommands: ``solve`` samples solution paths, ``evaluate`` repeats
expected-loss estimates, ``design`` runs the coordinate exchange optimizer,
``compare`` scores designs against each other, ``validate`` checks a
configuration or an emitted file.  Every output is a plain CSV or JSON file
whose bytes depend only on the configuration and seed.

Exit codes: 0 success, 2 configuration problem, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)

_CSV_HEADERS = {
    "draws": ("draw", "component", "t", "value"),
    "evaluations": ("repeat", "estimate", "std_error"),
    "trace": (
        "start", "cycle", "coord", "proposed",
        "p_star", "accepted", "lbar_current", "lbar_proposed",
    ),
    "compare": ("design", "estimate", "std_error", "p_star"),
}
_TEXT_COLUMNS = {"design", "accepted"}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odedesign",
        description="Configuration-driven experimental design runs.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON configuration file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="override the output directory")
    common.add_argument(
        "--threads", type=int, help="cap numeric worker threads"
    )
    common.add_argument(
        "--repeats", type=int, help="evaluation repeats (evaluate only)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="sample solution paths")
    p.add_argument("--theta", help="comma-separated vector field parameters")
    p.add_argument("--u0", help="comma-separated initial state")
    p.add_argument("--x", help="comma-separated treatment constants")
    p.add_argument("--omega", type=float, help="delay lag")
    p.add_argument("--draws", type=int, help="number of path draws")
    p.add_argument("--grid", type=int, help="override the solver grid size")

    p = sub.add_parser(
        "evaluate", parents=[common], help="repeat expected-loss estimates"
    )
    p.add_argument(
        "--design", help="baseline name, design JSON file, or config default"
    )

    sub.add_parser(
        "design", parents=[common], help="run the coordinate exchange optimizer"
    )

    p = sub.add_parser(
        "compare", parents=[common], help="score designs under shared noise"
    )
    p.add_argument(
        "designs", nargs="*",
        help="baseline names or design JSON files; default: initial + baselines",
    )

    p = sub.add_parser(
        "validate", parents=[common], help="check a config or an emitted file"
    )
    p.add_argument(
        "--file", action="append", default=[],
        help="emitted file to check against its schema (repeatable)",
    )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.threads:
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)
    from .errors import ConfigError, NumericalError

    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def _dispatch(args) -> int:
    from .configio import load_config

    run = load_config(args.config, seed=args.seed, out=args.out)
    handler = {
        "solve": _cmd_solve,
        "evaluate": _cmd_evaluate,
        "design": _cmd_design,
        "compare": _cmd_compare,
        "validate": _cmd_validate,
    }[args.command]
    return handler(run, args)


def _fmt(v) -> str:
    import numpy as np

    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    import json

    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _parse_vector(value):
    import numpy as np

    from .errors import ConfigError

    if value is None:
        return None
    if isinstance(value, (list, tuple, np.ndarray)):
        return np.asarray(value, dtype=float)
    try:
        return np.array([float(p) for p in str(value).split(",") if p.strip()])
    except ValueError:
        raise ConfigError(f"could not parse {value!r} as a number list") from None


def _solve_settings(run, args):
    from .errors import ConfigError

    block = dict(run.solve or {})
    for key, flag in (
        ("theta", args.theta), ("u0", args.u0), ("x", args.x),
        ("omega", args.omega), ("draws", args.draws), ("grid_n", args.grid),
    ):
        if flag is not None:
            block[key] = flag
    if "theta" not in block or "u0" not in block:
        raise ConfigError(
            "solve needs parameter values: a config solve block or "
            "--theta/--u0 flags"
        )
    theta = _parse_vector(block["theta"])
    u0 = _parse_vector(block["u0"])
    x = _parse_vector(block.get("x"))
    omega = block.get("omega")
    return theta, u0, x, omega, int(block.get("draws", 1000)), block.get("grid_n")


def _cmd_solve(run, args) -> int:
    import numpy as np

    from .errors import ConfigError
    from .solver import (
        KernelSpec,
        TimeGrid,
        alpha_from_rule,
        lam_from_rule,
        precompute,
        sample_paths,
    )
    from .streams import substream

    theta, u0, x, omega, n_draws, grid_n = _solve_settings(run, args)
    model = run.ref_model
    system = model.system
    if u0.size != system.ndim:
        raise ConfigError(
            f"initial state has {u0.size} entries; the model has "
            f"{system.ndim} components"
        )
    if system.delay is not None and omega is None:
        raise ConfigError("this model has a delayed component; pass --omega")

    grid = TimeGrid.regular(*system.t_span, int(grid_n or model.grid_n))
    out_path = run.out / "draws.csv"
    header = ",".join(_CSV_HEADERS["draws"])
    if n_draws == 0:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(header + "\n")
        print(f"wrote {out_path} (0 draws)")
        return 0

    kernel = KernelSpec(
        model.kernel_kind,
        lam_from_rule(model.lam_rule, grid),
        alpha_from_rule(model.alpha_rule, grid),
    )
    pre = precompute(grid, kernel, [])
    try:
        batch = sample_paths(
            pre,
            system,
            np.tile(theta, (n_draws, 1)),
            np.tile(u0, (n_draws, 1)),
            substream(run.seed, 100),
            x=None if x is None else np.tile(x, (n_draws, 1)),
            omega=None if omega is None else np.full(n_draws, float(omega)),
        )
    except (TypeError, IndexError) as exc:
        raise ConfigError(
            f"the vector field rejected these inputs ({exc}); "
            "check the --theta/--x/--u0 shapes against the model"
        ) from None
    t_repr = [repr(float(t)) for t in grid.points]
    lines = [header]
    for p in range(n_draws):
        for s in range(system.ndim):
            vals = batch.grid_values[p, :, s]
            lines.extend(
                f"{p},{s},{tr},{v!r}"
                for tr, v in zip(t_repr, map(float, vals))
            )
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(lines) + "\n")
    print(f"wrote {out_path} ({n_draws} draws)")
    return 0


def _cmd_evaluate(run, args) -> int:
    from .losses import design_precompute, mc_expected_loss
    from .streams import substream

    design = run.resolve_design(args.design)
    repeats = args.repeats if args.repeats is not None else 20
    pre = design_precompute(run.ref_model, design)
    rows = []
    for r in range(repeats):
        res = mc_expected_loss(
            run.loss, design, run.model, pre, substream(run.seed, 300, r)
        )
        rows.append((r, res.estimate, res.std_error))
    out_path = run.out / "evaluations.csv"
    _write_csv(out_path, _CSV_HEADERS["evaluations"], rows)
    if rows:
        import numpy as np

        mean = float(np.mean([r[1] for r in rows]))
        print(f"wrote {out_path} ({repeats} repeats, mean estimate {mean:.6g})")
    else:
        print(f"wrote {out_path} (0 repeats)")
    return 0


def _design_payload(run, design, estimate, std_error) -> dict:
    spec = design.spec
    model = run.ref_model
    payload = {
        "model": model.name,
        "coords": {
            spec.coord_name(i): float(v) for i, v in enumerate(design.vector)
        },
        "box": [float(v) for v in design.box],
        "times": [[float(t) for t in grp] for grp in design.times],
        "estimate": float(estimate),
        "std_error": float(std_error),
        "seed": run.seed,
    }
    if run.loss.models:
        payload["candidates"] = [m.name for m in run.loss.models]
    return payload


def _comparison_rows(run, entries):
    """Common-seed loss estimates; p_star is the probability the row's
    design is preferred over the first entry's design."""
    from dataclasses import replace

    from .ace import accept_probability
    from .losses import design_precompute, mc_expected_loss
    from .streams import substream

    loss_test = replace(run.loss, b_outer=run.ace.b_test, b_inner=None)
    scored = []
    for name, design in entries:
        pre = design_precompute(run.ref_model, design)
        res = mc_expected_loss(
            loss_test, design, run.model, pre, substream(run.seed, 400)
        )
        scored.append((name, res))
    first = scored[0][1]
    return [
        (name, res.estimate, res.std_error,
         accept_probability(first.per_sample, res.per_sample))
        for name, res in scored
    ]


def _cmd_design(run, args) -> int:
    from .ace import ace_run

    initials = [run.resolve_design()] if run.initial is not None else None
    best, trace = ace_run(run.model, run.loss, run.ace, initial_designs=initials)
    _write_csv(run.out / "trace.csv", _CSV_HEADERS["trace"], trace.as_rows())

    entries = [("final", best)] + [
        (name, run.ref_model.baseline_design(name)) for name in run.baselines
    ]
    rows = _comparison_rows(run, entries)
    _write_csv(run.out / "comparison.csv", _CSV_HEADERS["compare"], rows)
    _write_json(
        run.out / "design.json", _design_payload(run, best, rows[0][1], rows[0][2])
    )
    print(
        f"wrote {run.out}/design.json (estimate {rows[0][1]:.6g} "
        f"± {rows[0][2]:.2g}), trace.csv, comparison.csv"
    )
    return 0


def _cmd_compare(run, args) -> int:
    names = list(args.designs)
    if not names:
        names = ["initial" if run.initial is not None else "uniform"]
        names += [b for b in run.baselines if b not in names]
    entries = []
    for name in names:
        source = None if name == "initial" else name
        entries.append((Path(name).stem, run.resolve_design(source)))
    rows = _comparison_rows(run, entries)
    _write_csv(run.out / "compare.csv", _CSV_HEADERS["compare"], rows)
    for name, est, se, p in rows:
        print(
            f"{name}: {est:.6g} ± {se:.2g} "
            f"(p* better than {rows[0][0]}: {p:.3f})"
        )
    return 0


def _check_csv(path: Path, text: str) -> None:
    from .errors import ConfigError

    lines = text.rstrip("\n").split("\n")
    header = tuple(lines[0].split(","))
    matches = [h for h in _CSV_HEADERS.values() if h == header]
    if not matches:
        raise ConfigError(f"{path}: unrecognized header {lines[0]!r}")
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(header):
            raise ConfigError(
                f"{path}:{ln}: expected {len(header)} columns, got {len(parts)}"
            )
        for col, token in zip(header, parts):
            if col in _TEXT_COLUMNS:
                continue
            try:
                float(token)
            except ValueError:
                raise ConfigError(
                    f"{path}:{ln}: column {col!r} holds {token!r}, not a number"
                ) from None


def _cmd_validate(run, args) -> int:
    from .configio import _load_json
    from .errors import ConfigError

    for name in args.file:
        path = Path(name)
        if not path.exists():
            raise ConfigError(f"file not found: {path}")
        if path.suffix == ".json":
            run._design_from_dict(_load_json(path), path)
        elif path.suffix == ".csv":
            _check_csv(path, path.read_text())
        else:
            raise ConfigError(f"{path}: only .json and .csv files are checked")
        print(f"{path}: ok")
    print("config ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
