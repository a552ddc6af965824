"""Beta-Bernoulli belief state for one user-category pair.

A ``BetaState`` is the sufficient statistic of the feedback history: the prior
pseudo-counts plus the number of relevant / irrelevant forwarded items.
Discarded items carry no feedback and never touch the state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError

QUANTILE_TOL = 1e-10


@dataclass(frozen=True)
class BetaState:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise DomainError(f"Beta parameters must be positive, got ({self.alpha}, {self.beta})")

    @property
    def mean(self) -> float:
        return mean(self)

    @property
    def size(self) -> float:
        """Effective sample size ``alpha + beta``."""
        return self.alpha + self.beta


@dataclass(frozen=True)
class Feedback:
    """Relevance observed on a forwarded item."""

    relevant: bool


def update(state: BetaState, feedback: Feedback) -> BetaState:
    if feedback.relevant:
        return BetaState(state.alpha + 1, state.beta)
    return BetaState(state.alpha, state.beta + 1)


def mean(state: BetaState) -> float:
    return state.alpha / (state.alpha + state.beta)


def cdf(state: BetaState, point: float) -> float:
    """Regularized incomplete beta function at ``point``."""
    return float(special.betainc(state.alpha, state.beta, point))


def _log_pdf(a: float, b: float, point: float, log_norm: float) -> float:
    return (a - 1.0) * math.log(point) + (b - 1.0) * math.log1p(-point) - log_norm


def quantile(state: BetaState, rho: float) -> float:
    """Inverse CDF of Beta(alpha, beta) at ``rho``.

    Safeguarded Newton iteration on the regularized incomplete beta function:
    a Newton step is taken when it stays inside the current bracket, otherwise
    the bracket is bisected.
    """
    if not 0.0 < rho < 1.0:
        raise DomainError(f"rho must lie strictly inside (0, 1), got {rho}")
    a, b = state.alpha, state.beta
    log_norm = float(special.betaln(a, b))
    lo, hi = 0.0, 1.0
    guess = mean(state)
    for _ in range(300):
        f = float(special.betainc(a, b, guess)) - rho
        if f == 0.0:
            return guess
        if f < 0.0:
            lo = guess
        else:
            hi = guess
        if hi - lo <= 1e-15 or (abs(f) <= 1e-15 and hi - lo <= QUANTILE_TOL):
            break
        step_ok = False
        if 0.0 < guess < 1.0:
            dens = math.exp(_log_pdf(a, b, guess, log_norm))
            if dens > 0.0 and math.isfinite(dens):
                candidate = guess - f / dens
                if lo < candidate < hi:
                    nxt_guess = candidate
                    step_ok = True
        if not step_ok:
            nxt_guess = 0.5 * (lo + hi)
        if nxt_guess == guess:
            break
        guess = nxt_guess
    return guess


def sample(state: BetaState, rng: np.random.Generator) -> float:
    """One Beta draw as the ratio of two Gamma variates."""
    ga = rng.standard_gamma(state.alpha)
    gb = rng.standard_gamma(state.beta)
    total = ga + gb
    if total == 0.0:
        # both shapes tiny enough to underflow; fall back to the limiting Bernoulli
        return 1.0 if rng.random() < mean(state) else 0.0
    return float(ga / total)


class StreamFactory:
    """Counter-based substreams of one master seed.

    A Philox generator keyed by the master seed; substream ``(user, role)``
    starts at counter ``(0, 0, user, role)`` and advances through the low
    128 bits, so substreams never overlap in practice.  ``stream`` re-points a
    single reused Generator: the returned object is only valid until the next
    call, and one factory must not be shared between threads.
    """

    def __init__(self, seed: int):
        words = np.random.SeedSequence(seed).generate_state(2, np.uint64)
        self._bitgen = np.random.Philox(key=int(words[0]) | (int(words[1]) << 64))
        self._key = self._bitgen.state["state"]["key"].copy()
        self._gen = np.random.Generator(self._bitgen)

    def stream(self, user: int, role: int = 0) -> np.random.Generator:
        self._bitgen.state = {
            "bit_generator": "Philox",
            "state": {"counter": np.array([0, 0, user, role], dtype=np.uint64), "key": self._key},
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        return self._gen


def substream(seed: int, user: int = 0, role: int = 0) -> np.random.Generator:
    """Fresh Generator positioned at substream ``(user, role)`` of ``seed``.

    Identical to ``StreamFactory(seed).stream(user, role)`` but safe to keep.
    """
    return StreamFactory(seed).stream(user, role)
