"""Acceptance gate: one test per numbered criterion, each reported as PASS or FAIL in the summary."""
import itertools

import numpy as np
import pytest

from infofilter.dp_solver import (
    Bound,
    CategoryModel,
    expected_excess,
    q_forward,
    solve,
    solve_thresholds,
)
from infofilter.estimation import FitReport, fit_beta, fit_geometric, fit_traces, replay, synthesize_traces
from infofilter.policies import PAPER_RHO_GRID, PolicySpec, tune_ucb
from infofilter.posterior import substream
from infofilter.simulator import (
    CategoryArm,
    SimConfig,
    lifetime_check,
    make_policy,
    policy_family,
    simulate_multi,
    simulate_single,
    stopping_audit,
)
from oracles import brute_force_value

pytestmark = pytest.mark.slow

N_USERS = 100_000


def random_models(seed, count, gammas, cost_range=None):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        a, b = rng.uniform(0.5, 25.0, size=2)
        g = float(gammas[rng.integers(len(gammas))]) if isinstance(gammas, list) else float(rng.uniform(*gammas))
        hi = 1.0 if cost_range is None else min(1.0, cost_range * a / (a + b))
        out.append(CategoryModel(float(a), float(b), g, float(rng.uniform(0.0, hi))))
    return out


@pytest.mark.criterion(1)
def test_gap_certificate(detail):
    worst = -np.inf
    for model in random_models(101, 20, [0.9, 0.99, 0.999]):
        t = solve(model, 500)
        for level in range(501):
            excess = float(np.max(t.upper(level) - t.lower(level))) - t.gap_bound(level)
            worst = max(worst, excess)
    detail(f"max over 20 models of (vU - vL) - gamma_x^(M-level)/(1-gamma_x): {worst:.3e}")
    assert worst <= 1e-12


@pytest.mark.criterion(2)
def test_closed_form_corners(detail):
    worst_zero = 0.0
    unit_nonzero = 0
    for model in random_models(202, 10, [0.9, 0.99, 0.999]):
        zero, unit = solve(model.with_cost(0.0), 500), solve(model.with_cost(1.0), 500)
        for level in range(501):
            exact = model.lattice_means(level) / (1.0 - model.gamma_x)
            worst_zero = max(worst_zero, float(np.max(np.abs(zero.lower(level) - exact))), float(np.max(np.abs(zero.upper(level) - exact))))
            unit_nonzero += int(np.count_nonzero(unit.lower(level))) + int(np.count_nonzero(unit.upper(level)))
    detail(f"c=0: max |v - mean/(1-gamma_x)| = {worst_zero:.3e}; c=1: {unit_nonzero} nonzero values")
    assert worst_zero <= 1e-9
    assert unit_nonzero == 0


@pytest.mark.criterion(3)
def test_brute_force_oracle(detail):
    # discounts kept in [0.5, 0.95] and costs near the prior mean so that stopping decisions are non-trivial
    worst, checked = 0.0, 0
    for model in random_models(303, 10, (0.5, 0.95), cost_range=2.0):
        g, cost = model.gamma_x, model.cost
        lower = lambda level, a, b: max(0.0, a / (a + b) - cost) / (1.0 - g)
        upper = lambda level, a, b: float(expected_excess(a, b, cost)) / (1.0 - g)
        for depth in range(1, 7):
            t = solve(model, depth)
            for level in range(depth):
                for i in range(level + 1):
                    a, b = model.alpha0 + i, model.beta0 + level - i
                    for bound, term in ((Bound.LOWER, lower), (Bound.UPPER, upper)):
                        ref = brute_force_value(a, b, g, cost, depth - level, term, start_level=level)
                        worst = max(worst, abs(t.value(level, i, bound) - ref))
                        checked += 1
    detail(f"{checked} lattice values against exhaustive policy search, max abs error {worst:.3e}")
    assert worst <= 1e-12


@pytest.mark.criterion(4)
def test_structural_suite(news_model, detail):
    failures = []

    # thresholds never exceed the cost, except at levels where every reachable state forwards
    for cost in (0.0, 0.025, 0.05, 0.075, 0.1, 0.15):
        tt = solve_thresholds(news_model.with_cost(cost), 1e-6)
        above = (tt.mu_star > cost + 1e-6) & (tt.first_forward > 0)
        if np.any(above):
            failures.append(f"thresholds above c+eps at c={cost}, levels {np.flatnonzero(above)[:5]}")
    never = solve_thresholds(news_model.with_cost(1.0), 1e-6, 500)
    if np.any(np.isfinite(never.mu_star)):
        failures.append("finite threshold at c=1")

    irregular = 0
    for model in random_models(404, 20, [0.5, 0.9, 0.99]):
        t = solve(model, 400)
        cap = 1.0 / (1.0 - model.gamma_x)
        for level in range(401):
            lo, up = t.lower(level), t.upper(level)
            floor = np.maximum(0.0, model.lattice_means(level) - model.cost) * cap
            full_info = expected_excess(model.alpha0 + np.arange(level + 1), model.beta0 + level - np.arange(level + 1), model.cost) * cap
            if np.any(np.diff(lo) < -1e-12) or np.any(np.diff(up) < -1e-12):
                failures.append(f"non-monotone values at level {level} of {model}")
            if level >= 2 and (np.any(np.diff(lo, 2) < -1e-9) or np.any(np.diff(up, 2) < -1e-9)):
                failures.append(f"non-convex values at level {level} of {model}")
            if np.any(lo < floor - 1e-12) or np.any(lo > up + 1e-12) or np.any(up > full_info + 1e-12):
                failures.append(f"envelope violated at level {level} of {model}")
        tt = solve_thresholds(model, 1e-6, 150)
        deep = solve(model, tt.M)
        irregular += tt.irregular_levels
        for level in range(151):
            means = model.lattice_means(level)
            at_cost = np.flatnonzero(means >= model.cost).min(initial=level + 1)
            if tt.first_forward[level] > at_cost:
                failures.append(f"state with mean >= c discards at level {level} of {model}")
            for i in range(level + 1):
                forward = q_forward(deep, level, i, Bound.LOWER) > 0.0
                if forward != (i >= tt.first_forward[level]) and not tt.irregular_levels:
                    failures.append(f"threshold rule disagrees with Q-factor at ({level}, {i}) of {model}")

    audits = {}
    for kind in ("optimal", "exploit"):
        policy = make_policy(kind, news_model, n_users=10_000)
        audits[kind] = stopping_audit(news_model, policy, 10_000, seed=41)
    detail(f"stopping_audit violations over 10^4 users: {audits}")
    detail(f"random-model irregular threshold levels: {irregular}")
    for msg in failures[:5]:
        detail(msg)
    assert not failures
    assert audits == {"optimal": 0, "exploit": 0}


@pytest.mark.criterion(5)
def test_wald_sanity(detail):
    truth = 0.999 * 0.05 / 0.001
    model = CategoryModel(1.0, 19.0, 0.999, 0.0)
    spec = PolicySpec("exploit", 0.0)
    results = [simulate_single(model, spec, N_USERS, seed, keep_totals=False) for seed in range(100)]
    first = results[0]
    lo, hi = first.ci
    coverage = sum(r.ci[0] <= truth <= r.ci[1] for r in results) / len(results)
    detail(f"seed 0: {first.total_mean:.4f} +/- {first.total_ci_half_width:.4f} against {truth:.2f}")
    detail(f"95% CI coverage across 100 seeds: {coverage:.2f}")
    assert lo <= truth <= hi
    assert coverage >= 0.90


FIG2B_COSTS = (0.0, 0.025, 0.05, 0.075, 0.1, 0.15)


@pytest.fixture(scope="module")
def fig2b():
    rows = {}
    for cost in FIG2B_COSTS:
        model = CategoryModel(1.0, 19.0, 0.999, cost)
        # tuning uses its own seed so the reported run is out of sample
        rho = tune_ucb(model, PAPER_RHO_GRID, n_users=N_USERS, seed=8)
        specs = {
            "optimal": make_policy("optimal", model, n_users=N_USERS),
            "exploit": PolicySpec("exploit", cost),
            "ucb_tuned": PolicySpec("ucb", cost, rho=rho, label="ucb_tuned"),
            "ucb_0.75": PolicySpec("ucb", cost, rho=0.75),
            "thompson": PolicySpec("thompson", cost),
        }
        rows[cost] = (rho, {name: simulate_single(model, s, N_USERS, 7, keep_totals=False) for name, s in specs.items()})
    return rows


@pytest.mark.criterion(6)
def test_fig2b_cost_sweep(fig2b, detail):
    problems = []
    for cost, (rho, res) in fig2b.items():
        cells = ", ".join(f"{name} {r.total_mean:.3f}+/-{r.total_ci_half_width:.3f}" for name, r in res.items())
        detail(f"c={cost} (tuned rho {rho}): {cells}")
        if res["optimal"].total_mean < res["exploit"].total_mean:
            problems.append(f"optimal below exploit at c={cost}")
    if not fig2b[0.05][1]["optimal"].separated_above(fig2b[0.05][1]["exploit"]):
        problems.append("optimal not CI-separated above exploit at c=0.05")
    for cost in (0.0, 0.15):
        res = fig2b[cost][1]
        apart = [f"{a}/{b}" for (a, ra), (b, rb) in itertools.combinations(res.items(), 2) if not ra.overlaps(rb)]
        if apart:
            problems.append(f"non-overlapping CIs at c={cost}: {', '.join(apart)}")
    for p in problems:
        detail(p)
    assert not problems


@pytest.mark.criterion(7)
def test_mixture_additivity(detail):
    arms = (CategoryArm(1, 19, 0.5, "a"), CategoryArm(2, 8, 0.3, "b"), CategoryArm(1, 1, 0.2, "c"))
    config = SimConfig(arms, 0.999, N_USERS, 17)
    ok = True
    for kind in ("optimal", "exploit"):
        family = policy_family(kind, config, 0.05)
        multi = simulate_multi(config, family, keep_totals=False)
        singles = [
            simulate_single(arm_model, p, N_USERS, 100 + idx, keep_totals=False)
            for idx, (arm_model, p) in enumerate(zip(config.category_models(0.05), family))
        ]
        total = sum(s.total_mean for s in singles)
        tol = multi.total_ci_half_width + sum(s.total_ci_half_width for s in singles)
        detail(f"{kind}: mixture {multi.total_mean:.4f}, sum of categories {total:.4f}, tolerance {tol:.4f}")
        ok &= abs(multi.total_mean - total) <= tol
    assert ok


@pytest.mark.criterion(8)
def test_lifetime_distribution(detail):
    verdicts = []
    for p_x, gamma in ((1.0, 0.999), (0.5, 0.999), (0.1, 0.99)):
        fit = lifetime_check(gamma, p_x, N_USERS, seed=23)
        detail(f"p_x={p_x}, gamma={gamma}: chi2 {fit.statistic:.1f} < {fit.critical_value:.1f} (dof {fit.dof})")
        verdicts.append(fit.passed)
    assert all(verdicts)


@pytest.mark.criterion(9)
def test_estimation_recovery(detail):
    ok = True
    for a, b in ((1, 19), (2, 5), (5, 5)):
        fa, fb = fit_beta(substream(8, user=a).beta(a, b, size=N_USERS))
        err = max(abs(fa / a - 1), abs(fb / b - 1))
        detail(f"Beta({a},{b}) -> ({fa:.3f}, {fb:.3f}), max relative error {err:.3%}")
        ok &= err <= 0.05
    for gamma in (0.9, 0.99, 0.999):
        counts = substream(5, user=int(gamma * 1000)).geometric(1 - gamma, size=N_USERS) - 1
        se = (1 - gamma) * np.sqrt(gamma) / np.sqrt(N_USERS)
        z = (fit_geometric(counts) - gamma) / se
        detail(f"gamma={gamma}: estimate off by {z:+.2f} standard errors")
        ok &= abs(z) <= 3
    assert ok


@pytest.mark.criterion(10)
def test_replay_matches_idealized(detail):
    arms = (CategoryArm(1, 19, 0.6, "news"), CategoryArm(2, 8, 0.4, "sport"))
    config = SimConfig(arms, 0.99, 20_000, 11)
    events, users = synthesize_traces(config)
    truth = FitReport.from_config(config)
    estimated = fit_traces(events, min_visits=1, max_visits=10**6)
    ok = True
    for kind in ("optimal", "exploit"):
        family = policy_family(kind, config, 0.05)
        replayed = replay(events, truth, dict(zip(truth.categories, family)), users=users, seed=11, keep_totals=False)
        ideal = simulate_multi(config, family, seed=12, keep_totals=False)
        detail(
            f"{kind}: replay {replayed.total_mean:.4f}+/-{replayed.total_ci_half_width:.4f}, "
            f"idealized {ideal.total_mean:.4f}+/-{ideal.total_ci_half_width:.4f}"
        )
        ok &= replayed.overlaps(ideal)
        fitted = {
            name: make_policy(kind, cat.model(0.05), n_users=len(users)) for name, cat in estimated.categories.items()
        }
        refit = replay(events, estimated, fitted, users=users, seed=11, keep_totals=False)
        detail(f"{kind} with priors fitted from the traces (not gated): {refit.total_mean:.4f}")
    assert ok
