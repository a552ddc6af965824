"""Trace-driven evaluation next to the idealized simulator across a cost grid.

Without ``--traces`` the traces are synthesized from a two-category model, so
the idealized run at the generating parameters is the reference. Priors and
discounts are fitted on a training split of users and policies are replayed
on the held-out users.
"""
import argparse
import csv
import logging
from pathlib import Path

import numpy as np

from infofilter.estimation import fit_traces, policies_for_fit, read_traces, replay, split_users, synthesize_traces
from infofilter.simulator import CategoryArm, SimConfig, arms_from_effective_discounts, policy_family, simulate_multi


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--traces", type=Path, help="trace CSV (user_id,seq,category,clicked)")
    ap.add_argument("--users", type=int, default=20_000, help="synthetic users when no trace file is given")
    ap.add_argument("--gamma", type=float, default=0.99)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--min-visits", type=int, default=1)
    ap.add_argument("--max-visits", type=int, default=10**6)
    ap.add_argument("--out", type=Path, default=Path("out/traces"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    if args.traces:
        events = read_traces(args.traces)
    else:
        arms = (CategoryArm(1, 19, 0.6, "news"), CategoryArm(2, 8, 0.4, "sport"))
        events, _ = synthesize_traces(SimConfig(arms, args.gamma, args.users, args.seed))
    train, test = split_users([e.user_id for e in events], 0.5, args.seed)
    fit = fit_traces(events, train, min_visits=args.min_visits, max_visits=args.max_visits)
    for name, cat in fit.categories.items():
        logging.info("%s: Beta(%.3f, %.3f), gamma_x %.5f", name, cat.alpha0, cat.beta0, cat.gamma_x)

    names = list(fit.categories)
    gamma, fitted_arms = arms_from_effective_discounts(
        [(cat.alpha0, cat.beta0) for cat in fit.categories.values()], [cat.gamma_x for cat in fit.categories.values()], names
    )
    ideal_config = SimConfig(fitted_arms, gamma, len(test), args.seed + 1)

    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "trace_vs_idealized.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "c", "source", "total_mean", "ci_half", "n_users"])
        for cost in np.round(np.arange(0.0, 0.15 + 1e-9, 0.025), 4):
            for kind in ("optimal", "exploit"):
                specs = policies_for_fit(fit, kind, float(cost), n_users=len(test))
                res = replay(events, fit, specs, users=test, seed=args.seed, keep_totals=False)
                ideal = simulate_multi(ideal_config, policy_family(kind, ideal_config, float(cost)), keep_totals=False)
                for source, r in (("trace", res), ("idealized", ideal)):
                    w.writerow([kind, repr(float(cost)), source, repr(r.total_mean), repr(r.total_ci_half_width), r.n_users_effective])
                logging.info("%s c=%g: trace %.4f, idealized %.4f", kind, cost, res.total_mean, ideal.total_mean)
    logging.info("wrote %s", args.out)


if __name__ == "__main__":
    main()
