"""Idealized Monte Carlo evaluation of forwarding policies.

Users are independent work units.  User ``u`` draws everything about its
world (latent relevances, lifetime, item categories and relevance outcomes)
from the substream ``(seed, u, 0)``; Thompson sampling draws its posterior
samples from ``(seed, u, 1)``.  Results therefore do not depend on block size,
thread count or execution order, and different policies run at the same seed
see identical users (common random numbers).

Item relevance is realised as ``uniform < theta`` with one uniform per item,
whether or not the item is forwarded.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np
from scipy import stats

from .dp_solver import (
    DEFAULT_EPSILON,
    DEFAULT_MAX_USABLE_DEPTH,
    CategoryModel,
    effective_discount,
    solve_thresholds,
)
from .errors import ConfigError, DepthExceededError
from .policies import PolicyKind, PolicySpec, first_forward_indices
from .posterior import StreamFactory

log = logging.getLogger(__name__)

Z95 = 1.96
DEFAULT_WINDOW = 500
BLOCK_SIZE = 1024
WORLD, POLICY = 0, 1


@dataclass(frozen=True)
class CategoryArm:
    """Prior and arrival share of one item category.

    The category's effective discount follows from the global survival
    probability, see ``SimConfig.category_models``.
    """

    alpha0: float
    beta0: float
    p_x: float
    name: str = ""

    def __post_init__(self):
        if not (self.alpha0 > 0 and self.beta0 > 0):
            raise ConfigError(f"arm {self.name!r}: prior parameters must be positive")
        if not 0.0 < self.p_x <= 1.0:
            raise ConfigError(f"arm {self.name!r}: p_x must lie in (0, 1], got {self.p_x}")


@dataclass(frozen=True)
class SimConfig:
    arms: tuple[CategoryArm, ...]
    gamma: float
    n_users: int
    seed: int
    step_cap: int | None = None
    window: int = DEFAULT_WINDOW

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(self.arms))
        if not self.arms:
            raise ConfigError("at least one arm is required")
        total = math.fsum(a.p_x for a in self.arms)
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(f"arm shares must sum to 1, got {total!r}")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie strictly inside (0, 1), got {self.gamma}")
        if self.n_users < 1:
            raise ConfigError("n_users must be at least 1")
        if self.step_cap is not None and self.step_cap < 1:
            raise ConfigError("step_cap must be at least 1")

    @property
    def cap(self) -> int:
        return self.step_cap if self.step_cap is not None else default_step_cap(self.gamma)

    def gammas_x(self) -> list[float]:
        return [effective_discount(a.p_x, self.gamma) for a in self.arms]

    def category_models(self, cost: float) -> list[CategoryModel]:
        return [CategoryModel(a.alpha0, a.beta0, g, cost) for a, g in zip(self.arms, self.gammas_x())]


def default_step_cap(gamma: float) -> int:
    return int(math.ceil(100.0 / (1.0 - gamma)))


def arms_from_effective_discounts(priors, gammas_x, names=None) -> tuple[float, list[CategoryArm]]:
    """Global ``gamma`` and arrival shares that produce the requested per-category discounts.

    Inverts ``g_x / (1 - g_x) = p_x * gamma / (1 - gamma)`` under ``sum(p_x) = 1``.
    """
    odds = np.array([g / (1.0 - g) for g in gammas_x])
    total = float(odds.sum())
    gamma = total / (1.0 + total)
    names = names or [f"cat{idx}" for idx in range(len(odds))]
    shares = odds / total
    arms = [CategoryArm(a, b, float(p), name) for (a, b), p, name in zip(priors, shares, names)]
    return gamma, arms


@dataclass(frozen=True)
class UserDraw:
    theta: np.ndarray
    lifetime: int
    truncated: bool
    category_u: np.ndarray | None
    relevance_u: np.ndarray


def draw_user(streams: StreamFactory, user: int, alphas, betas, gamma: float, step_cap: int, with_categories: bool) -> UserDraw:
    """Latent relevances, lifetime and per-item uniforms of one user."""
    rng = streams.stream(user, WORLD)
    if len(alphas) == 1:
        ga = rng.standard_gamma(alphas[0])
        gb = rng.standard_gamma(betas[0])
        theta = np.array([ga / (ga + gb)])
    else:
        ga = rng.standard_gamma(alphas)
        gb = rng.standard_gamma(betas)
        theta = ga / (ga + gb)
    lifetime = int(rng.geometric(1.0 - gamma)) - 1  # support {0, 1, 2, ...}
    truncated = lifetime > step_cap
    lifetime = min(lifetime, step_cap)
    cats = rng.random(lifetime) if with_categories else None
    rel = rng.random(lifetime)
    return UserDraw(theta, lifetime, truncated, cats, rel)


@dataclass(eq=False)
class SimResult:
    policy: str
    cost: float
    gamma_x: float
    total_mean: float
    total_ci_half_width: float
    marginal_means: np.ndarray = field(repr=False)
    marginal_ci_half: np.ndarray = field(repr=False)
    n_users_effective: int
    n_truncated: int = 0
    usable_depth: int | None = None
    totals: np.ndarray | None = field(default=None, repr=False)

    @property
    def ci(self) -> tuple[float, float]:
        return self.total_mean - self.total_ci_half_width, self.total_mean + self.total_ci_half_width

    def overlaps(self, other: "SimResult") -> bool:
        return abs(self.total_mean - other.total_mean) <= self.total_ci_half_width + other.total_ci_half_width

    def separated_above(self, other: "SimResult") -> bool:
        return self.total_mean - self.total_ci_half_width > other.total_mean + other.total_ci_half_width


def summarize(policy, cost, gamma_x, totals, marg_sum, marg_sq, n_truncated=0, usable_depth=None, keep_totals=True):
    n_obs = totals.shape[0]
    mean = float(np.mean(totals))
    std = float(np.std(totals, ddof=1)) if n_obs > 1 else 0.0
    m_mean = marg_sum / n_obs
    if n_obs > 1:
        m_var = np.maximum(0.0, (marg_sq - marg_sum**2 / n_obs) / (n_obs - 1))
    else:
        m_var = np.zeros_like(marg_sum)
    return SimResult(
        policy=policy,
        cost=cost,
        gamma_x=gamma_x,
        total_mean=mean,
        total_ci_half_width=Z95 * std / math.sqrt(n_obs),
        marginal_means=m_mean,
        marginal_ci_half=Z95 * np.sqrt(m_var) / math.sqrt(n_obs),
        n_users_effective=n_obs,
        n_truncated=int(n_truncated),
        usable_depth=usable_depth,
        totals=totals if keep_totals else None,
    )


# --- kernels ---------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _single_block(theta, lifetimes, offsets, rel_u, cost, first_forward, window, totals, marg_sum, marg_sq):
    """Stopping-rule users of one category.  Returns the first user index that
    ran past the rule's depth, or -1."""
    depth = first_forward.shape[0]
    for u in range(theta.shape[0]):
        base = offsets[u]
        s = 0
        total = 0.0
        for step in range(lifetimes[u]):
            if step >= depth:
                return u
            if s < first_forward[step]:
                break  # state is frozen from here on, so is the decision
            hit = 1 if rel_u[base + step] < theta[u] else 0
            r = hit - cost
            total += r
            if step < window:
                marg_sum[step] += r
                marg_sq[step] += r * r
            s += hit
        totals[u] = total
    return -1


@numba.njit(cache=True)
def _beta_draw(rng, a, b):
    ga = rng.standard_gamma(a)
    gb = rng.standard_gamma(b)
    if ga + gb == 0.0:
        return 1.0 if rng.random() < a / (a + b) else 0.0
    return ga / (ga + gb)


@numba.njit(cache=True)
def _thompson_user(rng, theta, rel_u, a0, b0, cost, window, marg_sum, marg_sq):
    a = a0
    b = b0
    total = 0.0
    for step in range(rel_u.shape[0]):
        if _beta_draw(rng, a, b) >= cost:
            if rel_u[step] < theta:
                r = 1.0 - cost
                a += 1.0
            else:
                r = -cost
                b += 1.0
            total += r
            if step < window:
                marg_sum[step] += r
                marg_sq[step] += r * r
    return total


@numba.njit(cache=True)
def _pick_arm(cum, u):
    arm = 0
    last = cum.shape[0] - 1
    while arm < last and u >= cum[arm]:
        arm += 1
    return arm


@numba.njit(cache=True, nogil=True)
def _multi_block(theta, lifetimes, offsets, cat_u, rel_u, cum, cost, ff, depths, window, totals, marg_sum, marg_sq):
    n_arms = cum.shape[0]
    succ = np.zeros(n_arms, dtype=np.int64)
    level = np.zeros(n_arms, dtype=np.int64)
    stopped = np.zeros(n_arms, dtype=np.bool_)
    for u in range(theta.shape[0]):
        succ[:] = 0
        level[:] = 0
        stopped[:] = False
        n_stopped = 0
        base = offsets[u]
        total = 0.0
        for step in range(lifetimes[u]):
            arm = _pick_arm(cum, cat_u[base + step])
            if stopped[arm]:
                continue
            lv = level[arm]
            if lv >= depths[arm]:
                return u
            if succ[arm] < ff[arm, lv]:
                stopped[arm] = True
                n_stopped += 1
                if n_stopped == n_arms:
                    break
                continue
            hit = 1 if rel_u[base + step] < theta[u, arm] else 0
            r = hit - cost[arm]
            total += r
            if step < window:
                marg_sum[step] += r
                marg_sq[step] += r * r
            succ[arm] += hit
            level[arm] = lv + 1
        totals[u] = total
    return -1


@numba.njit(cache=True)
def _multi_user(rng, theta, cat_u, rel_u, cum, cost, kinds, a0, b0, ff, depths, window, marg_sum, marg_sq):
    """One user with at least one Thompson arm (kinds[arm] == 1).  Returns
    (total, exceeded flag)."""
    n_arms = cum.shape[0]
    succ = np.zeros(n_arms, dtype=np.int64)
    level = np.zeros(n_arms, dtype=np.int64)
    stopped = np.zeros(n_arms, dtype=np.bool_)
    total = 0.0
    for step in range(rel_u.shape[0]):
        arm = _pick_arm(cum, cat_u[step])
        if stopped[arm]:
            continue
        lv = level[arm]
        s = succ[arm]
        if kinds[arm] == 1:
            fwd = _beta_draw(rng, a0[arm] + s, b0[arm] + (lv - s)) >= cost[arm]
        else:
            if lv >= depths[arm]:
                return total, True
            fwd = s >= ff[arm, lv]
            if not fwd:
                stopped[arm] = True
        if not fwd:
            continue
        hit = 1 if rel_u[step] < theta[arm] else 0
        r = hit - cost[arm]
        total += r
        if step < window:
            marg_sum[step] += r
            marg_sq[step] += r * r
        succ[arm] += hit
        level[arm] = lv + 1
    return total, False


@numba.njit(cache=True, nogil=True)
def _audit_block(theta, lifetimes, offsets, rel_u, first_forward):
    """Count users whose decisions, evaluated at every item, forward after a discard."""
    depth = first_forward.shape[0]
    bad = 0
    for u in range(theta.shape[0]):
        base = offsets[u]
        s = 0
        level = 0
        discarded = False
        for step in range(lifetimes[u]):
            if level >= depth:
                return -1 - u
            if s >= first_forward[level]:
                if discarded:
                    bad += 1
                    break
                if rel_u[base + step] < theta[u]:
                    s += 1
                level += 1
            else:
                discarded = True
    return bad


@numba.njit(cache=True)
def _audit_thompson_user(rng, theta, rel_u, a0, b0, cost):
    a = a0
    b = b0
    discarded = False
    for step in range(rel_u.shape[0]):
        if _beta_draw(rng, a, b) >= cost:
            if discarded:
                return 1
            if rel_u[step] < theta:
                a += 1.0
            else:
                b += 1.0
        else:
            discarded = True
    return 0


# --- drivers ---------------------------------------------------------------


def suggested_usable_depth(gamma_x: float, n_users: int, step_cap: int | None = None) -> int:
    """Depth that no user's category lifetime exceeds with probability about 0.99."""
    horizon = math.ceil(math.log(0.01 / max(n_users, 1)) / math.log(gamma_x))
    cap = step_cap if step_cap is not None else default_step_cap(gamma_x)
    return int(max(1, min(horizon, cap)))


def make_policy(
    kind,
    model: CategoryModel,
    *,
    rho: float | None = None,
    label: str | None = None,
    epsilon_policy: float = DEFAULT_EPSILON,
    n_users: int | None = None,
    M_use: int | None = None,
) -> PolicySpec:
    """PolicySpec for ``model``, solving the threshold table when ``kind`` is OPTIMAL."""
    kind = PolicyKind(kind)
    table = None
    if kind is PolicyKind.OPTIMAL:
        if M_use is None and n_users is not None:
            M_use = suggested_usable_depth(model.gamma_x, n_users)
        table = solve_thresholds(model, epsilon_policy, M_use)
    return PolicySpec(kind, model.cost, rho=rho, table=table, label=label, epsilon_policy=epsilon_policy)


def _deepen(spec: PolicySpec, model: CategoryModel, needed: int, cap: int) -> PolicySpec:
    table = spec.table
    new_depth = min(max(2 * table.M_use, needed), cap)
    if new_depth <= table.M_use:
        raise DepthExceededError(needed, table.M_use)
    log.info("lifetime of %d items exceeds usable depth %d; re-solving to depth %d", needed, table.M_use, new_depth)
    deeper = solve_thresholds(
        model, table.epsilon_policy, new_depth, max_usable_depth=max(new_depth, DEFAULT_MAX_USABLE_DEPTH)
    )
    return PolicySpec(spec.kind, spec.cost, spec.rho, deeper, spec.label, spec.epsilon_policy)


def _blocks(n_users: int):
    for start in range(0, n_users, BLOCK_SIZE):
        yield start, min(start + BLOCK_SIZE, n_users)


def _pack(draws: list[UserDraw], with_categories: bool):
    lifetimes = np.array([d.lifetime for d in draws], dtype=np.int64)
    offsets = np.zeros(len(draws), dtype=np.int64)
    if len(draws) > 1:
        offsets[1:] = np.cumsum(lifetimes)[:-1]
    rel = np.concatenate([d.relevance_u for d in draws]) if draws else np.empty(0)
    cats = np.concatenate([d.category_u for d in draws]) if with_categories and draws else np.empty(0)
    theta = np.array([d.theta for d in draws])
    trunc = sum(d.truncated for d in draws)
    return theta, lifetimes, offsets, cats, rel, trunc


def _run_blocks(n_users, work, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(work, list(_blocks(n_users))))
    return [work(b) for b in _blocks(n_users)]


def simulate_single(
    model: CategoryModel,
    policy: PolicySpec,
    n_users: int,
    seed: int,
    *,
    step_cap: int | None = None,
    window: int = DEFAULT_WINDOW,
    threads: int = 1,
    keep_totals: bool = True,
) -> SimResult:
    """Expected total reward of ``policy`` on one category with lifetime Geometric(1 - gamma_x)."""
    if n_users < 1:
        raise ConfigError("n_users must be at least 1")
    if policy.cost != model.cost:
        raise ConfigError(f"policy cost {policy.cost} differs from model cost {model.cost}")
    cap = step_cap if step_cap is not None else default_step_cap(model.gamma_x)
    a0, b0, g, cost = model.alpha0, model.beta0, model.gamma_x, model.cost

    while True:
        if policy.deterministic:
            depth = policy.table.M_use if policy.kind is PolicyKind.OPTIMAL else cap
            ff = first_forward_indices(policy, model, min(depth, cap))
        totals = np.empty(n_users)

        def work(bounds):
            lo, hi = bounds
            world = StreamFactory(seed)
            draws = [draw_user(world, u, [a0], [b0], g, cap, False) for u in range(lo, hi)]
            theta, lifetimes, offsets, _, rel, trunc = _pack(draws, False)
            theta = theta[:, 0].copy()
            ms = np.zeros(window)
            mq = np.zeros(window)
            if policy.deterministic:
                out = totals[lo:hi]
                bad = _single_block(theta, lifetimes, offsets, rel, cost, ff, window, out, ms, mq)
                if bad >= 0:
                    return None, lifetimes[bad], trunc
            else:
                for idx, u in enumerate(range(lo, hi)):
                    rng = world.stream(u, POLICY)
                    seg = rel[offsets[idx]:offsets[idx] + lifetimes[idx]]
                    totals[u] = _thompson_user(rng, theta[idx], seg, a0, b0, cost, window, ms, mq)
            return (ms, mq), None, trunc

        parts = _run_blocks(n_users, work, threads)
        exceeded = [p[1] for p in parts if p[0] is None]
        if exceeded:
            # rerun every user on the deeper table so one table serves the whole run
            policy = _deepen(policy, model, int(max(exceeded)), cap)
            continue
        break

    marg_sum = np.zeros(window)
    marg_sq = np.zeros(window)
    for (ms, mq), _, _ in parts:
        marg_sum += ms
        marg_sq += mq
    n_trunc = sum(p[2] for p in parts)
    depth_used = policy.table.M_use if policy.kind is PolicyKind.OPTIMAL else None
    return summarize(policy.name, cost, g, totals, marg_sum, marg_sq, n_trunc, depth_used, keep_totals)


def simulate_multi(
    config: SimConfig,
    policies: Sequence[PolicySpec],
    *,
    seed: int | None = None,
    threads: int = 1,
    keep_totals: bool = True,
) -> SimResult:
    """Expected total reward over a category mixture, routing each item to its category's policy."""
    policies = list(policies)
    if len(policies) != len(config.arms):
        raise ConfigError(f"need one policy per arm ({len(config.arms)}), got {len(policies)}")
    seed = config.seed if seed is None else seed
    cap = config.cap
    costs = np.array([p.cost for p in policies])
    models = config.category_models(0.0)
    models = [arm_model.with_cost(p.cost) for arm_model, p in zip(models, policies)]
    for arm_model, p in zip(models, policies):
        if p.kind is PolicyKind.OPTIMAL and abs(p.table.model.gamma_x - arm_model.gamma_x) > 1e-12:
            raise ConfigError(
                f"OPTIMAL table solved for gamma_x={p.table.model.gamma_x}, arm needs {arm_model.gamma_x}"
            )
    alphas = np.array([a.alpha0 for a in config.arms])
    betas = np.array([a.beta0 for a in config.arms])
    cum = np.cumsum([a.p_x for a in config.arms])
    cum[-1] = 1.0
    kinds = np.array([0 if p.deterministic else 1 for p in policies], dtype=np.int64)
    window = config.window
    n_users = config.n_users

    while True:
        depths = np.zeros(len(policies), dtype=np.int64)
        tables = []
        shared: dict = {}  # arms with the same policy object and model share one tabulation
        for idx, (p, arm_model) in enumerate(zip(policies, models)):
            if p.deterministic:
                d = min(p.table.M_use if p.kind is PolicyKind.OPTIMAL else cap, cap)
                key = (id(p), arm_model, d)
                if key not in shared:
                    shared[key] = first_forward_indices(p, arm_model, d)
                tables.append(shared[key])
                depths[idx] = d + 1
            else:
                tables.append(np.zeros(1, dtype=np.int64))
        width = max(t.shape[0] for t in tables)
        ff = np.zeros((len(policies), width), dtype=np.int64)
        for idx, t in enumerate(tables):
            ff[idx, : t.shape[0]] = t
        totals = np.empty(n_users)

        def work(bounds):
            lo, hi = bounds
            world = StreamFactory(seed)
            draws = [draw_user(world, u, alphas, betas, config.gamma, cap, True) for u in range(lo, hi)]
            theta, lifetimes, offsets, cats, rel, trunc = _pack(draws, True)
            theta = theta.reshape(hi - lo, len(policies))
            ms = np.zeros(window)
            mq = np.zeros(window)
            if kinds.sum() == 0:
                bad = _multi_block(theta, lifetimes, offsets, cats, rel, cum, costs, ff, depths, window, totals[lo:hi], ms, mq)
                if bad >= 0:
                    return None, trunc
            else:
                for idx, u in enumerate(range(lo, hi)):
                    rng = world.stream(u, POLICY)
                    sl = slice(offsets[idx], offsets[idx] + lifetimes[idx])
                    total, over = _multi_user(rng, theta[idx], cats[sl], rel[sl], cum, costs, kinds, alphas, betas, ff, depths, window, ms, mq)
                    if over:
                        return None, trunc
                    totals[u] = total
            return (ms, mq), trunc

        parts = _run_blocks(n_users, work, threads)
        if any(p[0] is None for p in parts):
            deepened = False
            for idx, (p, arm_model) in enumerate(zip(policies, models)):
                if p.kind is PolicyKind.OPTIMAL and p.table.M_use < cap:
                    policies[idx] = _deepen(p, arm_model, 2 * p.table.M_use, cap)
                    deepened = True
            if not deepened:
                raise DepthExceededError(cap, cap)
            continue
        break

    marg_sum = np.zeros(window)
    marg_sq = np.zeros(window)
    for (ms, mq), _ in parts:
        marg_sum += ms
        marg_sq += mq
    n_trunc = sum(p[1] for p in parts)
    name = policies[0].name if len({p.name for p in policies}) == 1 else "mixed"
    cost = float(costs[0]) if np.all(costs == costs[0]) else float("nan")
    return summarize(name, cost, config.gamma, totals, marg_sum, marg_sq, n_trunc, None, keep_totals)


def policy_family(kind, config: SimConfig, cost: float, *, rho=None, label=None, epsilon_policy=DEFAULT_EPSILON) -> list[PolicySpec]:
    """One PolicySpec per arm of ``config``; identical arm models share a solve."""
    cache: dict[CategoryModel, PolicySpec] = {}
    out = []
    for arm_model in config.category_models(cost):
        if arm_model not in cache:
            cache[arm_model] = make_policy(kind, arm_model, rho=rho, label=label, epsilon_policy=epsilon_policy, n_users=config.n_users)
        out.append(cache[arm_model])
    return out


def stopping_audit(model: CategoryModel, policy: PolicySpec, n_users: int, seed: int, *, step_cap: int | None = None) -> int:
    """Number of simulated users for whom a FORWARD follows a DISCARD.

    Decisions are evaluated at every item of the user's lifetime, not just up
    to the first discard.
    """
    cap = step_cap if step_cap is not None else default_step_cap(model.gamma_x)
    a0, b0, g, cost = model.alpha0, model.beta0, model.gamma_x, model.cost
    while True:
        if policy.deterministic:
            depth = policy.table.M_use if policy.kind is PolicyKind.OPTIMAL else cap
            ff = first_forward_indices(policy, model, min(depth, cap))
        violations = 0
        exceeded = None
        world = StreamFactory(seed)
        for lo, hi in _blocks(n_users):
            draws = [draw_user(world, u, [a0], [b0], g, cap, False) for u in range(lo, hi)]
            theta, lifetimes, offsets, _, rel, _ = _pack(draws, False)
            theta = theta[:, 0].copy()
            if policy.deterministic:
                bad = _audit_block(theta, lifetimes, offsets, rel, ff)
                if bad < 0:
                    exceeded = int(lifetimes[-1 - bad])
                    break
                violations += bad
            else:
                for idx, u in enumerate(range(lo, hi)):
                    seg = rel[offsets[idx]:offsets[idx] + lifetimes[idx]]
                    violations += _audit_thompson_user(world.stream(u, POLICY), theta[idx], seg, a0, b0, cost)
        if exceeded is None:
            return violations
        policy = _deepen(policy, model, exceeded, cap)


@dataclass(frozen=True)
class GoodnessOfFit:
    statistic: float
    dof: int
    critical_value: float
    p_value: float
    gamma_x: float
    sample_mean: float
    expected_mean: float
    mean_se: float

    @property
    def passed(self) -> bool:
        return self.statistic < self.critical_value


def lifetime_check(gamma: float, p_x: float, n_samples: int, seed: int, *, n_bins: int = 50, level: float = 0.01) -> GoodnessOfFit:
    """Chi-square test of per-category arrival counts against Geometric(1 - gamma_x).

    Simulates the global lifetime N ~ Geometric(1 - gamma) on {0, 1, ...} and
    thins it, each item landing in the category with probability ``p_x``.
    """
    if n_samples < 10_000:
        raise ConfigError("lifetime_check needs at least 10^4 samples")
    gx = effective_discount(p_x, gamma)
    rng = StreamFactory(seed).stream(0, WORLD)
    n_global = rng.geometric(1.0 - gamma, size=n_samples) - 1
    counts = rng.binomial(n_global, p_x)

    # bins with roughly equal mass under the null; cdf(n) = 1 - gx**(n+1)
    probs = np.linspace(0.0, 1.0, n_bins + 1)[1:-1]
    edges = np.unique(np.ceil(np.log1p(-probs) / math.log(gx) - 1.0).astype(np.int64))
    edges = edges[edges >= 0]
    upper = np.append(edges, np.iinfo(np.int64).max)  # bin j holds (upper[j-1], upper[j]]
    cdf = 1.0 - gx ** (edges.astype(np.float64) + 1.0)
    expected_p = np.diff(np.concatenate([[0.0], cdf, [1.0]]))
    observed = np.bincount(np.searchsorted(upper, counts, side="left"), minlength=upper.shape[0])
    keep = expected_p > 0
    expected = expected_p[keep] * n_samples
    stat = float(np.sum((observed[keep] - expected) ** 2 / expected))
    dof = int(keep.sum()) - 1
    mean_true = gx / (1.0 - gx)
    se = math.sqrt(gx) / (1.0 - gx) / math.sqrt(n_samples)
    return GoodnessOfFit(
        statistic=stat,
        dof=dof,
        critical_value=float(stats.chi2.ppf(1.0 - level, dof)),
        p_value=float(stats.chi2.sf(stat, dof)),
        gamma_x=gx,
        sample_mean=float(np.mean(counts)),
        expected_mean=mean_true,
        mean_se=se,
    )


RESULT_HEADER = ["policy", "c", "gamma_x", "total_mean", "ci_half", "n_users"]


def write_results_csv(path, results: Sequence[SimResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_HEADER)
        for r in results:
            w.writerow([r.policy, repr(float(r.cost)), repr(float(r.gamma_x)), repr(r.total_mean), repr(r.total_ci_half_width), r.n_users_effective])


def write_marginals_csv(path, result: SimResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "marginal_mean", "ci_half"])
        for step, (avg, h) in enumerate(zip(result.marginal_means, result.marginal_ci_half), start=1):
            w.writerow([step, repr(float(avg)), repr(float(h))])
