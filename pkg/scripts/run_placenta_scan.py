"""Organ-count scan: how the optimized expected loss moves with M.

For each M the scan runs one seeded coordinate exchange optimization of the
transport model under squared-error loss, starting from rows of the
practitioner-proposed conditions table, then reports the median of repeated
Monte Carlo evaluations of the final design.  Budgets are desk scale; the
solver grid stays at the shipped 601 points because coarse grids add enough
path noise to obscure the between-M comparison.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from odedesign.ace import AceConfig, ace_run  # noqa: E402
from odedesign.designs import Design  # noqa: E402
from odedesign.losses import LossSpec, design_precompute, mc_expected_loss  # noqa: E402
from odedesign.models import get_model  # noqa: E402
from odedesign.models.placenta import PROPOSED_FETAL, PROPOSED_MATERNAL  # noqa: E402
from odedesign.streams import substream  # noqa: E402


def proposed_start(model) -> Design:
    rows = np.arange(1, model.n_organs + 1)
    box = np.concatenate([PROPOSED_MATERNAL[rows], PROPOSED_FETAL[rows]])
    times = model.baseline_design("uniform").times[0]
    return Design(model.design_spec(), box, [times.copy()])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--organs", type=int, nargs="+", default=[2, 4])
    ap.add_argument("--grid", type=int, default=601)
    ap.add_argument("--n-times", type=int, default=8)
    ap.add_argument("--b-train", type=int, default=200)
    ap.add_argument("--b-test", type=int, default=800)
    ap.add_argument("--q", type=int, default=6)
    ap.add_argument("--cycles", type=int, default=1)
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--b-outer", type=int, default=250)
    ap.add_argument("--b-inner", type=int, default=2500)
    ap.add_argument("--seed", type=int, default=5151)
    args = ap.parse_args()

    medians = {}
    for m in args.organs:
        if m + 1 > PROPOSED_MATERNAL.size:
            raise SystemExit(f"no proposed starting rows for M={m}")
        model = get_model("placenta", n_organs=m, n_times=args.n_times)
        model.grid_n = args.grid
        cfg = AceConfig(
            cycles=args.cycles,
            starts=1,
            q_train=args.q,
            b_train=args.b_train,
            b_test=args.b_test,
            seed=args.seed + m,
        )
        best, _ = ace_run(
            model,
            LossSpec("SEL", b_outer=args.b_test),
            cfg,
            initial_designs=[proposed_start(model)],
        )
        print(f"M={m}: conditions {np.round(best.box, 1).tolist()}")
        pre = design_precompute(model, best)
        ev = LossSpec("SEL", b_outer=args.b_outer, b_inner=args.b_inner)
        ests = [
            mc_expected_loss(
                ev, best, model, pre, substream(args.seed, 800, m, r)
            ).estimate
            for r in range(args.repeats)
        ]
        medians[m] = float(np.median(ests))
        print(
            f"M={m}: median final loss {medians[m]:.5g} over {args.repeats} "
            f"evaluations (range {min(ests):.5g} to {max(ests):.5g})"
        )

    order = sorted(medians)
    deltas = [medians[b] - medians[a] for a, b in zip(order, order[1:])]
    trend = "nonincreasing" if all(d <= 0 for d in deltas) else "mixed"
    print(f"median trend across M={order}: {trend}")


if __name__ == "__main__":
    main()
