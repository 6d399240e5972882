"""Regenerate the shipped run configurations.

One configuration per example and loss, plus the forcing table the
signalling model reads.  Re-running overwrites in place with identical
bytes, so the configs stay diffable.
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from odedesign.models.jakstat import DEFAULT_FORCING_TABLE  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
CONFIG_DIR = ROOT / "configs"

ACE_FULL = {
    "cycles": 10,
    "starts": 3,
    "q_train": 20,
    "b_train": 1000,
    "b_test": 20000,
}

FAMILIES = [
    ("compartmental", {"n_times": 15, "min_sep": 0.25}, None),
    ("fitzhugh_nagumo", {"n_times": 21, "min_sep": 0.25}, None),
    ("jakstat", {"n_times": 16, "min_sep": 1.0}, "jakstat_forcing.csv"),
]

PLACENTA_SOLVE = {
    "theta": [100.0, 0.05, 100.0, 100.0],
    "u0": [0.0, 1000.0],
    "x": [7.5, 1000.0],
    "draws": 1000,
    "grid_n": 501,
}


def write(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def main() -> None:
    CONFIG_DIR.mkdir(exist_ok=True)
    forcing = CONFIG_DIR / "jakstat_forcing.csv"
    lines = ["t,kappa"] + [
        f"{t!r},{v!r}" for t, v in map(tuple, DEFAULT_FORCING_TABLE.tolist())
    ]
    forcing.write_text("\n".join(lines) + "\n")

    seed = 0
    names = []
    for model_id, options, forcing_name in FAMILIES:
        for kind in ("SEL", "AEL", "SIL"):
            seed += 1
            name = f"{model_id}_{kind.lower()}"
            model = {"id": model_id, "options": options}
            if forcing_name:
                model["forcing_table"] = forcing_name
            write(
                CONFIG_DIR / f"{name}.json",
                {
                    "model": model,
                    "loss": {"kind": kind, "b_outer": 1000},
                    "ace": ACE_FULL,
                    "design": {"baselines": ["uniform"]},
                    "seed": seed,
                    "out": f"results/{name}",
                },
            )
            names.append(name)

    for m in range(2, 8):
        options = {"n_organs": m, "n_times": 8, "min_sep": 5.0}
        for kind in ("SEL", "AEL", "SIL", "MSL"):
            seed += 1
            name = f"placenta_{kind.lower()}_m{m}"
            payload = {
                "loss": {"kind": kind, "b_outer": 1000},
                "ace": ACE_FULL,
                "design": {"baselines": ["uniform", "proposed"]},
                "seed": seed,
                "out": f"results/{name}",
            }
            if kind == "MSL":
                payload["loss"]["candidates"] = [
                    {"id": "placenta", "options": options},
                    {"id": "placenta_sym", "options": options},
                ]
            else:
                payload["model"] = {"id": "placenta", "options": options}
            if kind == "SEL" and m == 7:
                payload["solve"] = PLACENTA_SOLVE
            write(CONFIG_DIR / f"{name}.json", payload)
            names.append(name)

    print(f"wrote {len(names)} configs and {forcing.name} to {CONFIG_DIR}")


if __name__ == "__main__":
    main()
