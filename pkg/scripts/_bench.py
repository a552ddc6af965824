"""Shared pieces for the benchmark scripts: the five-policy lineup and CSV output."""
import csv
import logging
from pathlib import Path

from infofilter.policies import PAPER_RHO_GRID, PolicySpec, tune_ucb
from infofilter.simulator import make_policy, policy_family, simulate_multi, simulate_single

log = logging.getLogger("bench")

COLUMNS = ["policy", "c", "gamma_x", "rho", "total_mean", "ci_half", "n_users"]


def single_category_lineup(model, n_users, seed, untuned_rho):
    """Results for optimal, exploit, tuned UCB, untuned UCB and Thompson on one category.

    Tuning runs on ``seed + 1`` so the reported UCB run is out of sample.
    """
    tuned = tune_ucb(model, PAPER_RHO_GRID, n_users=n_users, seed=seed + 1)
    specs = [
        ("optimal", None, make_policy("optimal", model, n_users=n_users)),
        ("exploit", None, PolicySpec("exploit", model.cost)),
        ("ucb_tuned", tuned, PolicySpec("ucb", model.cost, rho=tuned, label="ucb_tuned")),
        ("ucb_untuned", untuned_rho, PolicySpec("ucb", model.cost, rho=untuned_rho, label="ucb_untuned")),
        ("thompson", None, PolicySpec("thompson", model.cost)),
    ]
    out = []
    for name, rho, spec in specs:
        res = simulate_single(model, spec, n_users, seed, keep_totals=False)
        log.info("%s c=%g gamma_x=%g: %.4f +/- %.4f", name, model.cost, model.gamma_x, res.total_mean, res.total_ci_half_width)
        out.append((name, rho, res))
    return out


def mixture_lineup(config, cost, untuned_rho):
    """Five-policy results on a category mixture; tuned UCB searches one shared rho on ``seed + 1``."""
    best_rho, best = None, float("-inf")
    for rho in sorted(PAPER_RHO_GRID):
        res = simulate_multi(config, policy_family("ucb", config, cost, rho=rho), seed=config.seed + 1, keep_totals=False)
        if res.total_mean > best:
            best_rho, best = rho, res.total_mean
    lineup = [
        ("optimal", None, policy_family("optimal", config, cost)),
        ("exploit", None, policy_family("exploit", config, cost)),
        ("ucb_tuned", best_rho, policy_family("ucb", config, cost, rho=best_rho, label="ucb_tuned")),
        ("ucb_untuned", untuned_rho, policy_family("ucb", config, cost, rho=untuned_rho, label="ucb_untuned")),
        ("thompson", None, policy_family("thompson", config, cost)),
    ]
    out = []
    for name, rho, family in lineup:
        res = simulate_multi(config, family, keep_totals=False)
        log.info("%s c=%g: %.4f +/- %.4f", name, cost, res.total_mean, res.total_ci_half_width)
        out.append((name, rho, res))
    return out


def write_rows(path, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for name, rho, res in rows:
            w.writerow([name, repr(res.cost), repr(res.gamma_x), "" if rho is None else repr(rho),
                        repr(res.total_mean), repr(res.total_ci_half_width), res.n_users_effective])
    return path
