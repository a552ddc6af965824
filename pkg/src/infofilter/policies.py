"""Forwarding policies behind one decision interface.

Every policy decides from the current posterior state only.  The three
deterministic rules (optimal, pure exploitation, UCB) are lattice threshold
rules: at each level there is a smallest success count from which they
forward.  ``first_forward_indices`` exposes that form for the simulator.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import special

from . import posterior
from .dp_solver import (
    DEFAULT_EPSILON,
    CategoryModel,
    Decision,
    ThresholdTable,
    ValueTable,
    _first_index_at_least,
    decide_optimal,
    lattice_coordinates,
)
from .errors import ConfigError, DepthExceededError, DomainError
from .posterior import BetaState

PAPER_RHO_GRID = (0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 0.99)


class PolicyKind(str, Enum):
    OPTIMAL = "optimal"
    EXPLOIT = "exploit"
    UCB = "ucb"
    THOMPSON = "thompson"


@dataclass(frozen=True, eq=False)
class PolicySpec:
    kind: PolicyKind
    cost: float
    rho: float | None = None
    table: ThresholdTable | ValueTable | None = None
    label: str | None = None
    epsilon_policy: float = DEFAULT_EPSILON

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if not 0.0 <= self.cost <= 1.0:
            raise ConfigError(f"cost must lie in [0, 1], got {self.cost}")
        if self.kind is PolicyKind.UCB and (self.rho is None or not 0.0 < self.rho < 1.0):
            raise ConfigError(f"UCB needs rho in (0, 1), got {self.rho}")
        if self.kind is PolicyKind.OPTIMAL:
            if self.table is None:
                raise ConfigError("an OPTIMAL policy needs a solved threshold or value table")
            if self.table.model.cost != self.cost:
                raise ConfigError(
                    f"table was solved for cost {self.table.model.cost}, policy cost is {self.cost}"
                )

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind is PolicyKind.UCB:
            return f"ucb{self.rho:g}"
        return self.kind.value

    @property
    def deterministic(self) -> bool:
        return self.kind is not PolicyKind.THOMPSON


def exploit_decide(state: BetaState, cost: float) -> Decision:
    return Decision.FORWARD if posterior.mean(state) >= cost else Decision.DISCARD


def ucb_decide(state: BetaState, cost: float, rho: float) -> Decision:
    if not 0.0 < rho < 1.0:
        raise DomainError(f"rho must lie strictly inside (0, 1), got {rho}")
    return Decision.FORWARD if posterior.quantile(state, rho) >= cost else Decision.DISCARD


def thompson_decide(state: BetaState, cost: float, rng: np.random.Generator) -> Decision:
    return Decision.FORWARD if posterior.sample(state, rng) >= cost else Decision.DISCARD


def policy_decide(spec: PolicySpec, state: BetaState, rng: np.random.Generator | None = None) -> Decision:
    if spec.kind is PolicyKind.OPTIMAL:
        return decide_optimal(spec.table, state, spec.epsilon_policy)
    if spec.kind is PolicyKind.EXPLOIT:
        return exploit_decide(state, spec.cost)
    if spec.kind is PolicyKind.UCB:
        return ucb_decide(state, spec.cost, spec.rho)
    if rng is None:
        raise ConfigError("Thompson sampling needs a random stream")
    return thompson_decide(state, spec.cost, rng)


def _ucb_first_forward(alpha0: float, beta0: float, cost: float, rho: float, depth: int) -> np.ndarray:
    # Q(rho) >= c  <=>  I_c(alpha, beta) <= rho; the CDF at c falls as successes grow.
    levels = np.arange(depth + 1)
    lo = np.zeros(depth + 1, dtype=np.int64)
    hi = levels + 1
    while True:
        active = lo < hi
        if not active.any():
            break
        mid = (lo + hi) // 2
        lv = levels[active]
        mi = mid[active]
        ok = special.betainc(alpha0 + mi, beta0 + (lv - mi), cost) <= rho
        hi[active] = np.where(ok, mi, hi[active])
        lo[active] = np.where(ok, lo[active], mi + 1)
    return lo


def first_forward_indices(spec: PolicySpec, model: CategoryModel, depth: int) -> np.ndarray:
    """Per-level smallest forwarding success count for levels ``0..depth``.

    ``level + 1`` at a level means the rule never forwards there.  Raises
    ``DepthExceededError`` when an OPTIMAL table is shallower than ``depth``.
    """
    if spec.kind is PolicyKind.THOMPSON:
        raise ConfigError("Thompson sampling is randomized and has no lattice threshold form")
    if spec.kind is PolicyKind.OPTIMAL:
        table = spec.table
        if not isinstance(table, ThresholdTable):
            raise ConfigError("the simulator needs an OPTIMAL policy backed by a ThresholdTable")
        if table.M_use < depth:
            raise DepthExceededError(depth, table.M_use)
        return table.first_forward[: depth + 1].copy()
    if spec.kind is PolicyKind.EXPLOIT:
        out = np.empty(depth + 1, dtype=np.int64)
        _first_index_at_least(model.alpha0, model.beta0, np.full(depth + 1, spec.cost), out)
        return out
    return _ucb_first_forward(model.alpha0, model.beta0, spec.cost, spec.rho, depth)


def lattice_decide(spec: PolicySpec, model: CategoryModel, state: BetaState) -> Decision:
    """Decision of a deterministic rule through its lattice threshold form."""
    level, i = lattice_coordinates(model, state)
    first = first_forward_indices(spec, model, level)
    return Decision.FORWARD if i >= first[level] else Decision.DISCARD


def tune_ucb(
    model: CategoryModel,
    rho_grid=PAPER_RHO_GRID,
    n_users: int = 10_000,
    seed: int = 0,
    **sim_kwargs,
) -> float:
    """Grid value of rho with the largest simulated total reward.

    All grid points share the same seed (common random numbers); ties go to
    the smallest rho.
    """
    from .simulator import simulate_single

    grid = sorted(rho_grid)
    if not grid:
        raise ConfigError("rho grid is empty")
    if n_users < 1:
        raise ConfigError("n_users must be at least 1")
    best_rho, best = grid[0], -np.inf
    for rho in grid:
        spec = PolicySpec(PolicyKind.UCB, model.cost, rho=rho)
        result = simulate_single(model, spec, n_users, seed, **sim_kwargs)
        if result.total_mean > best:
            best_rho, best = rho, result.total_mean
    return best_rho
