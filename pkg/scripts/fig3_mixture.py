"""Five-policy comparison on a mixture of 20 short-lived categories and one long-lived one."""
import argparse
import logging
from pathlib import Path

import numpy as np

from _bench import mixture_lineup, write_rows
from infofilter.simulator import SimConfig, arms_from_effective_discounts


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--short", type=int, default=20, help="number of categories at the short discount")
    ap.add_argument("--short-gamma-x", type=float, default=0.95)
    ap.add_argument("--long-gamma-x", type=float, default=0.995)
    ap.add_argument("--users", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--untuned-rho", type=float, default=0.85)
    ap.add_argument("--out", type=Path, default=Path("out/fig3"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    discounts = [args.short_gamma_x] * args.short + [args.long_gamma_x]
    names = [f"short{idx}" for idx in range(args.short)] + ["long"]
    gamma, arms = arms_from_effective_discounts([(1.0, 19.0)] * len(discounts), discounts, names)
    config = SimConfig(arms, gamma, args.users, args.seed)
    logging.info("global gamma %.6f", gamma)

    rows = []
    for cost in np.round(np.arange(0.02, 0.1 + 1e-9, 0.01), 3):
        rows.extend(mixture_lineup(config, float(cost), args.untuned_rho))
    logging.info("wrote %s", write_rows(args.out / "mixture.csv", rows))


if __name__ == "__main__":
    main()
