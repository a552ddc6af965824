"""Single-category forwarding problem: certified value bounds and thresholds.

The discounted single-category problem is solved on the lattice of posterior
states reachable from the prior, ``(alpha0 + i, beta0 + level - i)``, where
``level`` counts forwarded items and ``i`` counts relevant ones.  Discarding
leaves the posterior unchanged, so the recursion is

    V(a, b) = max{0, mu - c + g * [mu * V(a+1, b) + (1-mu) * V(a, b+1)]}

truncated at depth ``M`` with a lower and an upper terminal value.  The two
resulting tables bracket the true value function with a gap of at most
``g**(M - level) / (1 - g)`` at every lattice point.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numba
import numpy as np
from scipy import special

from .errors import ConfigError, DepthExceededError, DomainError, ResourceError
from .posterior import BetaState

NEVER_FORWARD = math.inf
DEFAULT_EPSILON = 1e-6
DEFAULT_MAX_USABLE_DEPTH = 100_000
DEFAULT_MEMORY_BUDGET = 1 << 30  # bytes for the two full triangular arrays
_LATTICE_TOL = 1e-9


class Bound(Enum):
    LOWER = "lower"
    UPPER = "upper"


class Decision(IntEnum):
    DISCARD = 0
    FORWARD = 1


@dataclass(frozen=True)
class CategoryModel:
    alpha0: float
    beta0: float
    gamma_x: float
    cost: float

    def __post_init__(self):
        if not (self.alpha0 > 0 and self.beta0 > 0):
            raise DomainError(f"prior parameters must be positive, got ({self.alpha0}, {self.beta0})")
        if not 0.0 < self.gamma_x < 1.0:
            raise DomainError(f"gamma_x must lie strictly inside (0, 1), got {self.gamma_x}")
        if not 0.0 <= self.cost <= 1.0:
            raise DomainError(f"cost must lie in [0, 1], got {self.cost}")

    @property
    def prior(self) -> BetaState:
        return BetaState(self.alpha0, self.beta0)

    def lattice_means(self, level: int) -> np.ndarray:
        """Posterior means of the ``level + 1`` states at ``level``, ordered by successes."""
        return lattice_means(self.alpha0, self.beta0, level)

    def with_cost(self, cost: float) -> "CategoryModel":
        return CategoryModel(self.alpha0, self.beta0, self.gamma_x, cost)


def lattice_means(alpha0: float, beta0: float, level: int) -> np.ndarray:
    # Same float expression as BetaState.mean on lattice_state(); the threshold
    # round trip relies on that.
    i = np.arange(level + 1, dtype=np.float64)
    alpha = alpha0 + i
    beta = beta0 + (level - i)
    return alpha / (alpha + beta)


def lattice_state(model: CategoryModel, level: int, successes: int) -> BetaState:
    return BetaState(model.alpha0 + successes, model.beta0 + (level - successes))


def lattice_coordinates(model: CategoryModel, state: BetaState) -> tuple[int, int]:
    """Map a posterior state back to ``(level, successes)`` on the model's lattice."""
    i = state.alpha - model.alpha0
    f = state.beta - model.beta0
    ri, rf = round(i), round(f)
    if abs(i - ri) > _LATTICE_TOL * max(1.0, abs(i)) or abs(f - rf) > _LATTICE_TOL * max(1.0, abs(f)):
        raise DomainError(
            f"state ({state.alpha}, {state.beta}) is not reachable from prior "
            f"({model.alpha0}, {model.beta0}) by integer counts"
        )
    if ri < 0 or rf < 0:
        raise DomainError(f"state ({state.alpha}, {state.beta}) lies below the prior")
    return ri + rf, ri


def effective_discount(p_x: float, gamma: float) -> float:
    """Per-category survival parameter when a fraction ``p_x`` of items is in the category."""
    if not 0.0 < p_x <= 1.0:
        raise DomainError(f"p_x must lie in (0, 1], got {p_x}")
    if not 0.0 < gamma < 1.0:
        raise DomainError(f"gamma must lie strictly inside (0, 1), got {gamma}")
    return p_x * gamma / (p_x * gamma + 1.0 - gamma)


def truncation_margin(gamma_x: float, epsilon: float) -> int:
    """Smallest ``steps`` with ``gamma_x**steps / (1 - gamma_x) <= epsilon``."""
    if epsilon <= 0:
        raise ConfigError(f"epsilon_policy must be positive, got {epsilon}")
    steps = math.log(epsilon * (1.0 - gamma_x)) / math.log(gamma_x)
    steps = max(0, math.ceil(steps))
    while gamma_x**steps / (1.0 - gamma_x) > epsilon:
        steps += 1
    return steps


def default_usable_depth(gamma_x: float, max_depth: int = DEFAULT_MAX_USABLE_DEPTH) -> int:
    """About ten expected category lifetimes, capped at ``max_depth``."""
    return int(min(math.ceil(10.0 / (1.0 - gamma_x)), max_depth))


def terminal_lower(model: CategoryModel, level: int) -> np.ndarray:
    mu = model.lattice_means(level)
    return np.maximum(0.0, mu - model.cost) / (1.0 - model.gamma_x)


def expected_excess(alpha, beta, cost):
    """E[max(0, theta - cost)] for theta ~ Beta(alpha, beta)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    mu = alpha / (alpha + beta)
    tail_shifted = special.betaincc(alpha + 1.0, beta, cost)
    tail = special.betaincc(alpha, beta, cost)
    return np.maximum(0.0, mu * tail_shifted - cost * tail)


def terminal_upper(model: CategoryModel, level: int, loose: bool = False) -> np.ndarray:
    """Upper terminal value at ``level``.

    Default is the full-information bound ``E[max(0, theta - c)] / (1 - g)``;
    ``loose=True`` uses the constant ``1 / (1 - g)``.
    """
    if loose:
        return np.full(level + 1, 1.0 / (1.0 - model.gamma_x))
    i = np.arange(level + 1, dtype=np.float64)
    alpha = model.alpha0 + i
    beta = model.beta0 + (level - i)
    return expected_excess(alpha, beta, model.cost) / (1.0 - model.gamma_x)


@numba.njit(cache=True)
def _backward_level(a0, b0, g, cost, level, nxt, out):
    for i in range(level + 1):
        alpha = a0 + i
        beta = b0 + (level - i)
        s = alpha + beta
        q = alpha / s - cost + g * (alpha / s * nxt[i + 1] + beta / s * nxt[i])
        out[i] = q if q > 0.0 else 0.0


@numba.njit(cache=True)
def _fill_triangle(a0, b0, g, cost, depth, flat):
    # flat holds levels 0..depth back to back; the last level must already be filled.
    for level in range(depth - 1, -1, -1):
        start = level * (level + 1) // 2
        nstart = (level + 1) * (level + 2) // 2
        _backward_level(a0, b0, g, cost, level, flat[nstart:nstart + level + 2], flat[start:start + level + 1])


@numba.njit(cache=True)
def _sweep_first_forward(a0, b0, g, cost, depth, m_use, terminal, first_out):
    """Backward sweep keeping two levels; records, for levels <= m_use, the
    smallest success index whose lower-bound forward Q-factor is positive.
    Returns (root value, number of levels whose forward set is not an upper set)."""
    nxt = terminal.copy()
    cur = np.empty(depth + 1)
    irregular = 0
    root = nxt[0]
    for level in range(depth - 1, -1, -1):
        record = level <= m_use
        first = level + 1
        count = 0
        for i in range(level + 1):
            alpha = a0 + i
            beta = b0 + (level - i)
            s = alpha + beta
            q = alpha / s - cost + g * (alpha / s * nxt[i + 1] + beta / s * nxt[i])
            if q > 0.0:
                cur[i] = q
                if record:
                    count += 1
                    if first == level + 1:
                        first = i
            else:
                cur[i] = 0.0
        if record:
            first_out[level] = first
            if count != level + 1 - first:
                irregular += 1
        nxt, cur = cur, nxt
        root = nxt[0]
    if depth == 0:
        root = terminal[0]
    return root, irregular


def _offset(level: int) -> int:
    return level * (level + 1) // 2


@dataclass(frozen=True, eq=False)
class ValueTable:
    """Lower and upper truncated value functions on the lattice, levels 0..M."""

    model: CategoryModel
    M: int
    vL_flat: np.ndarray = field(repr=False)
    vU_flat: np.ndarray = field(repr=False)

    def lower(self, level: int) -> np.ndarray:
        self._check_level(level)
        return self.vL_flat[_offset(level):_offset(level) + level + 1]

    def upper(self, level: int) -> np.ndarray:
        self._check_level(level)
        return self.vU_flat[_offset(level):_offset(level) + level + 1]

    def values(self, level: int, bound: Bound) -> np.ndarray:
        return self.lower(level) if bound is Bound.LOWER else self.upper(level)

    def value(self, level: int, successes: int, bound: Bound) -> float:
        self._check_point(level, successes)
        return float(self.values(level, bound)[successes])

    def gap_bound(self, level: int) -> float:
        g = self.model.gamma_x
        return g ** (self.M - level) / (1.0 - g)

    def usable_depth(self, epsilon_policy: float = DEFAULT_EPSILON) -> int:
        """Deepest level whose certified gap is at most ``epsilon_policy`` (-1 if none)."""
        margin = truncation_margin(self.model.gamma_x, epsilon_policy)
        return self.M - margin

    def _check_level(self, level: int):
        if not 0 <= level <= self.M:
            raise IndexError(f"level {level} outside 0..{self.M}")

    def _check_point(self, level: int, successes: int):
        self._check_level(level)
        if not 0 <= successes <= level:
            raise IndexError(f"successes {successes} outside 0..{level}")

    def to_csv(self, path) -> None:
        a0, b0 = self.model.alpha0, self.model.beta0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["level", "i", "alpha", "beta", "vL", "vU"])
            for level in range(self.M + 1):
                lo, up = self.lower(level), self.upper(level)
                for i in range(level + 1):
                    w.writerow([level, i, repr(a0 + i), repr(b0 + (level - i)), repr(float(lo[i])), repr(float(up[i]))])


def solve(
    model: CategoryModel,
    M: int,
    *,
    loose_upper: bool = False,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> ValueTable:
    """Truncated backward induction for the lower and upper value tables."""
    if M < 1:
        raise ConfigError(f"truncation depth M must be at least 1, got {M}")
    n_points = (M + 1) * (M + 2) // 2
    need = 2 * 8 * n_points
    if need > memory_budget:
        raise ResourceError(
            f"value table for M={M} needs {need} bytes, over the memory budget of {memory_budget} bytes"
        )
    a0, b0, g, cost = model.alpha0, model.beta0, model.gamma_x, model.cost
    vL = np.empty(n_points)
    vU = np.empty(n_points)
    top = _offset(M)
    vL[top:] = terminal_lower(model, M)
    vU[top:] = terminal_upper(model, M, loose=loose_upper)
    _fill_triangle(a0, b0, g, cost, M, vL)
    _fill_triangle(a0, b0, g, cost, M, vU)
    return ValueTable(model, M, vL, vU)


def _successor_values(table: ValueTable, level: int, successes: int, bound: Bound):
    if level >= table.M:
        raise IndexError(f"level {level} has no successors in a table of depth {table.M}")
    table._check_point(level, successes)
    nxt = table.values(level + 1, bound)
    alpha = table.model.alpha0 + successes
    beta = table.model.beta0 + (level - successes)
    s = alpha + beta
    return alpha / s, beta / s, float(nxt[successes + 1]), float(nxt[successes])


def q_forward(table: ValueTable, level: int, successes: int, bound: Bound = Bound.LOWER) -> float:
    """Value of forwarding now and acting optimally afterwards, from one bound table."""
    p, q, v_up, v_down = _successor_values(table, level, successes, bound)
    g, cost = table.model.gamma_x, table.model.cost
    return p - cost + g * (p * v_up + q * v_down)


def voi(table: ValueTable, level: int, successes: int, bound: Bound = Bound.LOWER) -> float:
    """Value of the feedback a forward would reveal.

    ``q_forward == (mu - c) + g * V + voi`` holds with ``V`` from the same bound.
    """
    p, q, v_up, v_down = _successor_values(table, level, successes, bound)
    v_here = table.value(level, successes, bound)
    return table.model.gamma_x * (p * v_up + q * v_down - v_here)


@numba.njit(cache=True)
def _first_index_at_least(a0, b0, thresholds, out):
    for level in range(thresholds.shape[0]):
        t = thresholds[level]
        if not t < np.inf:
            out[level] = level + 1
            continue
        size = a0 + b0 + level
        i = int(math.ceil(t * size - a0))
        if i < 0:
            i = 0
        if i > level + 1:
            i = level + 1
        # exact float predicate, identical expression to lattice_means
        while i > 0 and (a0 + (i - 1)) / ((a0 + (i - 1)) + (b0 + (level - (i - 1)))) >= t:
            i -= 1
        while i <= level and (a0 + i) / ((a0 + i) + (b0 + (level - i))) < t:
            i += 1
        out[level] = i


@dataclass(frozen=True, eq=False)
class ThresholdTable:
    """Forwarding threshold per level: forward iff the posterior mean is at least ``mu_star[level]``.

    ``mu_star[level]`` is the smallest reachable posterior mean at that level whose
    lower-bound forward Q-factor is strictly positive, or ``NEVER_FORWARD``.
    """

    model: CategoryModel
    M: int | None
    M_use: int
    epsilon_policy: float
    mu_star: np.ndarray = field(repr=False)
    irregular_levels: int = 0
    first_forward: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mu = np.asarray(self.mu_star, dtype=np.float64)
        if mu.shape != (self.M_use + 1,):
            raise ConfigError(f"expected {self.M_use + 1} thresholds, got {mu.shape}")
        first = np.empty(mu.shape[0], dtype=np.int64)
        _first_index_at_least(self.model.alpha0, self.model.beta0, mu, first)
        object.__setattr__(self, "mu_star", mu)
        object.__setattr__(self, "first_forward", first)

    @property
    def sample_sizes(self) -> np.ndarray:
        """Effective sample size ``alpha0 + beta0 + level`` at each level."""
        return self.model.alpha0 + self.model.beta0 + np.arange(self.M_use + 1)

    def forwards(self, level: int, successes: int) -> bool:
        if level > self.M_use:
            raise DepthExceededError(level, self.M_use)
        return successes >= self.first_forward[level]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["level", "m", "mu_star"])
            for level, (size, t) in enumerate(zip(self.sample_sizes, self.mu_star)):
                w.writerow([level, repr(float(size)), "inf" if math.isinf(t) else repr(float(t))])

    @classmethod
    def from_csv(cls, path, model: CategoryModel, epsilon_policy: float = DEFAULT_EPSILON) -> "ThresholdTable":
        levels, values = [], []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["level", "m", "mu_star"]:
                raise ConfigError(f"{path}: expected header level,m,mu_star, got {reader.fieldnames}")
            for row in reader:
                levels.append(int(row["level"]))
                values.append(float(row["mu_star"]))
        if levels != list(range(len(levels))):
            raise ConfigError(f"{path}: levels must run 0..n without gaps")
        return cls(model, None, len(values) - 1, epsilon_policy, np.array(values))


def _mu_star_from_first(model: CategoryModel, first: np.ndarray) -> np.ndarray:
    mu = np.full(first.shape[0], NEVER_FORWARD)
    for level, i in enumerate(first):
        if i <= level:
            a = model.alpha0 + i
            mu[level] = a / (a + (model.beta0 + (level - i)))
    return mu


def thresholds(table: ValueTable, epsilon_policy: float = DEFAULT_EPSILON, M_use: int | None = None) -> ThresholdTable:
    """Extract per-level thresholds from a solved value table."""
    if epsilon_policy <= 0:
        raise ConfigError(f"epsilon_policy must be positive, got {epsilon_policy}")
    certified = table.usable_depth(epsilon_policy)
    if M_use is None:
        M_use = certified
        if M_use < 0:
            raise ConfigError(
                f"M={table.M} is too shallow to certify epsilon_policy={epsilon_policy}; "
                f"need M >= {truncation_margin(table.model.gamma_x, epsilon_policy)}"
            )
    if M_use >= table.M:
        raise ConfigError(f"M_use={M_use} must be smaller than the table depth M={table.M}")
    if M_use > certified:
        raise ConfigError(
            f"M_use={M_use} exceeds the deepest level ({certified}) certified to epsilon_policy={epsilon_policy}"
        )
    model = table.model
    g, cost = model.gamma_x, model.cost
    first = np.empty(M_use + 1, dtype=np.int64)
    irregular = 0
    for level in range(M_use + 1):
        i = np.arange(level + 1, dtype=np.float64)
        alpha = model.alpha0 + i
        beta = model.beta0 + (level - i)
        s = alpha + beta
        nxt = table.lower(level + 1)
        q = alpha / s - cost + g * (alpha / s * nxt[1:] + beta / s * nxt[:-1])
        fwd = np.flatnonzero(q > 0.0)
        first[level] = fwd[0] if fwd.size else level + 1
        if fwd.size != level + 1 - first[level]:
            irregular += 1
    return ThresholdTable(model, table.M, M_use, epsilon_policy, _mu_star_from_first(model, first), irregular)


def solve_thresholds(
    model: CategoryModel,
    epsilon_policy: float = DEFAULT_EPSILON,
    M_use: int | None = None,
    *,
    max_usable_depth: int = DEFAULT_MAX_USABLE_DEPTH,
) -> ThresholdTable:
    """Threshold table without materialising the value triangle.

    The truncation depth is ``M = M_use + truncation_margin(gamma_x, epsilon_policy)``
    so every usable level carries a certified gap of at most ``epsilon_policy``.
    Only the lower table is swept; decisions never consult the upper one.
    """
    if M_use is None:
        M_use = default_usable_depth(model.gamma_x, max_usable_depth)
    if M_use < 0:
        raise ConfigError(f"M_use must be non-negative, got {M_use}")
    if M_use > max_usable_depth:
        raise ResourceError(f"M_use={M_use} exceeds the configured maximum usable depth {max_usable_depth}")
    depth = M_use + max(1, truncation_margin(model.gamma_x, epsilon_policy))
    first = np.empty(M_use + 1, dtype=np.int64)
    _, irregular = _sweep_first_forward(
        model.alpha0, model.beta0, model.gamma_x, model.cost, depth, M_use, terminal_lower(model, depth), first
    )
    return ThresholdTable(model, depth, M_use, epsilon_policy, _mu_star_from_first(model, first), int(irregular))


def decide_optimal(table: ValueTable | ThresholdTable, state: BetaState, epsilon_policy: float = DEFAULT_EPSILON) -> Decision:
    """Epsilon-optimal forwarding decision at a reachable posterior state.

    Forwards iff the lower-bound forward Q-factor is strictly positive; states
    whose true Q-factor is within the bound gap of zero resolve to DISCARD.
    """
    level, i = lattice_coordinates(table.model, state)
    if isinstance(table, ThresholdTable):
        return Decision.FORWARD if table.forwards(level, i) else Decision.DISCARD
    usable = table.usable_depth(epsilon_policy)
    if level > usable:
        raise DepthExceededError(level, usable)
    return Decision.FORWARD if q_forward(table, level, i, Bound.LOWER) > 0.0 else Decision.DISCARD
