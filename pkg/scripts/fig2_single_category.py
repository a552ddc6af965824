"""Five-policy comparison on one category: marginal rewards, cost sweep, discount sweep.

Panel ``a`` writes per-step marginal rewards at one cost; panel ``b`` sweeps
the forwarding cost; panel ``c`` sweeps the discount. Full-size curves use
5e5 users and take hours on one core; ``--users`` trades precision for time.
"""
import argparse
import logging
from pathlib import Path

import numpy as np

from _bench import single_category_lineup, write_rows
from infofilter.dp_solver import CategoryModel
from infofilter.simulator import write_marginals_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("panel", choices=["a", "b", "c"])
    ap.add_argument("--alpha0", type=float, default=1.0)
    ap.add_argument("--beta0", type=float, default=19.0)
    ap.add_argument("--users", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--untuned-rho", type=float, default=0.75)
    ap.add_argument("--out", type=Path, default=Path("out/fig2"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    if args.panel == "a":
        cells = [(0.05, 0.999)]
    elif args.panel == "b":
        cells = [(float(value), 0.999) for value in np.round(np.arange(0.0, 0.15 + 1e-9, 0.0125), 4)]
    else:
        cells = [(0.05, float(g)) for g in np.round(np.arange(0.95, 0.995 + 1e-9, 0.005), 3)]

    rows = []
    for cost, gamma_x in cells:
        model = CategoryModel(args.alpha0, args.beta0, gamma_x, cost)
        lineup = single_category_lineup(model, args.users, args.seed, args.untuned_rho)
        rows.extend(lineup)
        if args.panel == "a":
            for name, _, res in lineup:
                args.out.mkdir(parents=True, exist_ok=True)
                write_marginals_csv(args.out / f"marginals_{name}.csv", res)
    logging.info("wrote %s", write_rows(args.out / f"panel_{args.panel}.csv", rows))


if __name__ == "__main__":
    main()
