"""Optimal forwarding thresholds for one category, with posterior-mean sample paths.

Writes ``thresholds.csv`` (level, m, mu_star) and ``paths.csv`` (user, step,
policy, posterior mean before the step, forwarded) for a few simulated users
under the optimal and pure-exploitation rules.
"""
import argparse
import csv
import logging
from pathlib import Path

from infofilter.dp_solver import CategoryModel, Decision, solve_thresholds
from infofilter.policies import PolicySpec, lattice_decide
from infofilter.posterior import Feedback, StreamFactory, update
from infofilter.simulator import WORLD


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alpha0", type=float, default=1.0)
    ap.add_argument("--beta0", type=float, default=19.0)
    ap.add_argument("--gamma-x", type=float, default=0.999)
    ap.add_argument("--cost", type=float, default=0.05)
    ap.add_argument("--depth", type=int, default=10_000, help="usable threshold depth")
    ap.add_argument("--paths", type=int, default=3, help="sample users per policy")
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("out/fig1"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    model = CategoryModel(args.alpha0, args.beta0, args.gamma_x, args.cost)
    table = solve_thresholds(model, 1e-6, args.depth)
    args.out.mkdir(parents=True, exist_ok=True)
    table.to_csv(args.out / "thresholds.csv")
    logging.info("solved to M=%d, usable depth %d, irregular levels %d", table.M, table.M_use, table.irregular_levels)

    policies = {"optimal": PolicySpec("optimal", args.cost, table=table), "exploit": PolicySpec("exploit", args.cost)}
    streams = StreamFactory(args.seed)
    with open(args.out / "paths.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user", "step", "policy", "mean", "forwarded"])
        for user in range(args.paths):
            rng = streams.stream(user, WORLD)
            theta = rng.beta(args.alpha0, args.beta0)
            relevance = rng.random(min(args.steps, args.depth))
            for name, spec in policies.items():
                state = model.prior
                for step, u in enumerate(relevance):
                    forward = lattice_decide(spec, model, state) is Decision.FORWARD
                    w.writerow([user, step, name, repr(state.mean), int(forward)])
                    if not forward:
                        break  # both rules are stopping rules
                    state = update(state, Feedback(bool(u < theta)))
    logging.info("wrote %s", args.out)


if __name__ == "__main__":
    main()
