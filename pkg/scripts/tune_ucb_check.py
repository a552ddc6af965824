"""Tuned UCB quantile levels for the reference category at two discounts.

Expected choices at cost 0.05: 0.95 when gamma_x = 0.999 and 0.85 when
gamma_x = 0.995. The 0.995 case is close between 0.85 and 0.9, so small
user counts can flip it.
"""
import argparse
import sys

from infofilter.dp_solver import CategoryModel
from infofilter.policies import PAPER_RHO_GRID, tune_ucb

EXPECTED = {0.999: 0.95, 0.995: 0.85}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--users", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    ok = True
    for gamma_x, want in EXPECTED.items():
        got = tune_ucb(CategoryModel(1.0, 19.0, gamma_x, 0.05), PAPER_RHO_GRID, n_users=args.users, seed=args.seed)
        print(f"gamma_x={gamma_x}: tuned rho {got} (expected {want})")
        ok &= got == want
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
