"""How often leave-one-period-out CV picks the true factor count.

    python scripts/cv_selection_rate.py --reps 50 --noise-sd 0.01
"""
import argparse
from collections import Counter

from eventcausal.dgp import SimDesign, generate
from eventcausal.estimators import EstimatorSpec, fit_gsynth
from eventcausal.montecarlo import panel_design
from eventcausal.panel import to_excess


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--reps", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--panel", default="A")
    ap.add_argument("--r-max", type=int, default=4)
    ap.add_argument("--noise-sd", type=float, default=SimDesign().noise_sd)
    args = ap.parse_args()

    spec = EstimatorSpec("gsynth", r_max=args.r_max)
    picks = Counter()
    for i in range(args.reps):
        d = panel_design(args.panel, SimDesign(noise_sd=args.noise_sd, seed=args.seed + i))
        raw, f, s, _ = generate(d)
        fit = fit_gsynth(to_excess(raw, f), s, spec)
        picks.update(fit.selected_r.values())
    total = sum(picks.values())
    for r in sorted(picks):
        print(f"r={r}: {picks[r]}/{total} ({picks[r] / total:.0%})")


if __name__ == "__main__":
    main()
