"""Fitting priors and lifetimes from presentation/click traces, and trace replay.

A trace row records one item presented to a user: ``user_id,seq,category,clicked``.
``seq`` orders a user's presentations.  Replay walks each user's items in that
order and reveals the click only when the policy forwards the item.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dp_solver import DEFAULT_EPSILON, CategoryModel, Decision
from .errors import ConfigError, DegenerateSampleError, TraceParseError
from .policies import PolicyKind, PolicySpec, policy_decide
from .posterior import BetaState, Feedback, StreamFactory, update
from .simulator import DEFAULT_WINDOW, POLICY, SimConfig, SimResult, draw_user, summarize

log = logging.getLogger(__name__)

TRACE_HEADER = ["user_id", "seq", "category", "clicked"]
DEFAULT_MIN_VISITS = 30
DEFAULT_MAX_VISITS = 510


@dataclass(frozen=True)
class TraceEvent:
    user_id: str
    seq: int
    category: str
    clicked: bool


def read_traces(path) -> list[TraceEvent]:
    events = []
    seen = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TraceParseError("empty trace file", line=1)
        if header != TRACE_HEADER:
            raise TraceParseError(f"expected header {','.join(TRACE_HEADER)}, got {','.join(header)}", line=1)
        for row in reader:
            line = reader.line_num
            if len(row) != 4:
                raise TraceParseError(f"expected 4 fields, got {len(row)}", line=line)
            user, seq, cat, clicked = row
            try:
                seq_i = int(seq)
            except ValueError:
                raise TraceParseError(f"seq {seq!r} is not an integer", line=line) from None
            if seq_i < 0:
                raise TraceParseError(f"seq {seq_i} is negative", line=line)
            if clicked not in ("0", "1"):
                raise TraceParseError(f"clicked must be 0 or 1, got {clicked!r}", line=line)
            if (user, seq_i) in seen:
                raise TraceParseError(f"duplicate (user_id, seq) = ({user}, {seq_i})", line=line)
            seen.add((user, seq_i))
            events.append(TraceEvent(user, seq_i, cat, clicked == "1"))
    return events


def write_traces(path, events: Iterable[TraceEvent]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for e in events:
            w.writerow([e.user_id, e.seq, e.category, int(e.clicked)])


def estimate_theta(events: Sequence[TraceEvent]) -> float | None:
    """Click-through rate of one user on one category; ``None`` when nothing was presented."""
    if not events:
        return None
    return sum(e.clicked for e in events) / len(events)


def fit_beta(rates) -> tuple[float, float]:
    """Method-of-moments Beta fit."""
    sample = np.asarray(rates, dtype=np.float64)
    if sample.size < 2:
        raise DegenerateSampleError("need at least two rates (sample variance is zero)")
    avg = float(np.mean(sample))
    v = float(np.var(sample, ddof=1))
    # also catches distinct rates whose variance underflows
    if not v > 0.0:
        raise DegenerateSampleError("sample variance is zero")
    if v >= avg * (1.0 - avg):
        raise DegenerateSampleError(
            f"sample variance {v:.6g} is not below mean*(1-mean) = {avg * (1.0 - avg):.6g}"
        )
    t = avg * (1.0 - avg) / v - 1.0
    return avg * t, (1.0 - avg) * t


def fit_geometric(counts) -> float:
    """MLE of ``gamma`` for counts ~ Geometric(1 - gamma) on {0, 1, ...}."""
    sample = np.asarray(counts, dtype=np.float64)
    if sample.size == 0:
        raise DegenerateSampleError("no counts to fit")
    nbar = float(np.mean(sample))
    return nbar / (1.0 + nbar)


def split_users(user_ids, fraction: float, seed: int) -> tuple[list[str], list[str]]:
    """Seeded random train/test partition of the distinct user ids."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"train fraction must lie strictly inside (0, 1), got {fraction}")
    users = sorted(set(user_ids))
    rng = StreamFactory(seed).stream(0, 0)
    perm = rng.permutation(len(users))
    n_train = int(round(fraction * len(users)))
    train = sorted(users[i] for i in perm[:n_train])
    test = sorted(users[i] for i in perm[n_train:])
    return train, test


@dataclass
class CategoryFit:
    alpha0: float
    beta0: float
    gamma_x: float
    n_train_users: int
    theta_mean: float = math.nan
    theta_var: float = math.nan
    count_mean: float = math.nan

    def model(self, cost: float) -> CategoryModel:
        return CategoryModel(self.alpha0, self.beta0, self.gamma_x, cost)


@dataclass
class FitReport:
    categories: dict[str, CategoryFit] = field(default_factory=dict)

    def to_json(self, path=None) -> str:
        text = json.dumps({name: asdict(fit) for name, fit in sorted(self.categories.items())}, indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_config(cls, config: SimConfig, names: Sequence[str] | None = None) -> "FitReport":
        """Report holding the generating parameters themselves (no fitting)."""
        names = list(names) if names is not None else [a.name or f"cat{idx}" for idx, a in enumerate(config.arms)]
        return cls(
            {name: CategoryFit(a.alpha0, a.beta0, g, 0) for name, a, g in zip(names, config.arms, config.gammas_x())}
        )

    @classmethod
    def from_json(cls, path) -> "FitReport":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: fit report must be a JSON object keyed by category")
        cats = {}
        for name, entry in raw.items():
            try:
                cats[name] = CategoryFit(**entry)
            except TypeError as exc:
                raise ConfigError(f"{path}: category {name!r}: {exc}") from None
        return cls(cats)


def _by_user(events: Iterable[TraceEvent]) -> dict[str, list[TraceEvent]]:
    users: dict[str, list[TraceEvent]] = defaultdict(list)
    for e in events:
        users[e.user_id].append(e)
    for evs in users.values():
        evs.sort(key=lambda e: e.seq)
    return users


def fit_traces(
    events: Iterable[TraceEvent],
    users: Iterable[str] | None = None,
    *,
    min_visits: int = DEFAULT_MIN_VISITS,
    max_visits: int = DEFAULT_MAX_VISITS,
) -> FitReport:
    """Per-category prior and effective discount from training users.

    A user's visit count is the number of items presented to them; users
    outside ``[min_visits, max_visits]`` are dropped.  Every eligible user
    contributes a lifetime count (possibly 0) to each category, and a
    click-through rate to each category in which they saw at least one item.
    """
    grouped = _by_user(events)
    if users is not None:
        keep = set(users)
        grouped = {u: evs for u, evs in grouped.items() if u in keep}
    eligible = {u: evs for u, evs in grouped.items() if min_visits <= len(evs) <= max_visits}
    if not eligible:
        raise DegenerateSampleError(
            f"no eligible users: none of {len(grouped)} users has between {min_visits} and {max_visits} visits"
        )
    categories = sorted({e.category for evs in eligible.values() for e in evs})
    report = FitReport()
    for cat in categories:
        rates, counts = [], []
        for evs in eligible.values():
            mine = [e for e in evs if e.category == cat]
            counts.append(len(mine))
            rate = estimate_theta(mine)
            if rate is not None:
                rates.append(rate)
        a, b = fit_beta(rates)
        report.categories[cat] = CategoryFit(
            alpha0=a,
            beta0=b,
            gamma_x=fit_geometric(counts),
            n_train_users=len(rates),
            theta_mean=float(np.mean(rates)),
            theta_var=float(np.var(rates, ddof=1)),
            count_mean=float(np.mean(counts)),
        )
    return report


def policies_for_fit(fit: FitReport, kind, cost: float, *, rho=None, label=None, epsilon_policy=DEFAULT_EPSILON, n_users=None) -> dict[str, PolicySpec]:
    from .simulator import make_policy

    return {
        name: make_policy(kind, cf.model(cost), rho=rho, label=label, epsilon_policy=epsilon_policy, n_users=n_users)
        for name, cf in fit.categories.items()
    }


@dataclass(eq=False)
class ReplayResult(SimResult):
    n_forwarded: int = 0
    forwarded_clicks: int = 0
    n_updates: int = 0
    skipped_events: int = 0


def replay(
    traces: Iterable[TraceEvent],
    fit: FitReport,
    policy: PolicySpec | Mapping[str, PolicySpec],
    *,
    users: Sequence[str] | None = None,
    seed: int = 0,
    window: int = DEFAULT_WINDOW,
    keep_totals: bool = True,
) -> ReplayResult:
    """Trace-driven evaluation of a policy.

    Forwarded items earn ``clicked - c`` and update the category posterior;
    discarded items earn nothing and reveal nothing.  ``users`` fixes the
    cohort, so users without any presented item count as zero reward.
    Events from categories missing in ``fit`` are skipped and counted.
    """
    if isinstance(policy, PolicySpec):
        if policy.kind is PolicyKind.OPTIMAL and len(fit.categories) > 1:
            raise ConfigError("an OPTIMAL policy is per category; pass a mapping category -> PolicySpec")
        specs = {name: policy for name in fit.categories}
    else:
        specs = dict(policy)
        missing = set(fit.categories) - set(specs)
        if missing:
            raise ConfigError(f"no policy for categories {sorted(missing)}")
    costs = {s.cost for s in specs.values()}
    grouped = _by_user(traces)
    cohort = sorted(grouped) if users is None else list(users)
    if not cohort:
        raise DegenerateSampleError("no users to replay")

    totals = np.zeros(len(cohort))
    marg_sum = np.zeros(window)
    marg_sq = np.zeros(window)
    streams = StreamFactory(seed)
    n_fwd = n_clicks = n_upd = skipped = 0
    for slot, user in enumerate(cohort):
        rng = streams.stream(slot, POLICY)
        states = {name: BetaState(cf.alpha0, cf.beta0) for name, cf in fit.categories.items()}
        frozen: set[str] = set()
        total = 0.0
        for step, e in enumerate(grouped.get(user, ())):
            spec = specs.get(e.category)
            if spec is None:
                skipped += 1
                continue
            if e.category in frozen:
                continue
            if policy_decide(spec, states[e.category], rng) is Decision.FORWARD:
                r = float(e.clicked) - spec.cost
                total += r
                if step < window:
                    marg_sum[step] += r
                    marg_sq[step] += r * r
                states[e.category] = update(states[e.category], Feedback(e.clicked))
                n_fwd += 1
                n_clicks += e.clicked
                n_upd += 1
            elif spec.deterministic:
                # posterior frozen, so every later item of this category is discarded too
                frozen.add(e.category)
        totals[slot] = total
    if skipped:
        log.warning("skipped %d events from categories absent in the fit report", skipped)

    names = {s.name for s in specs.values()}
    base = summarize(
        names.pop() if len(names) == 1 else "mixed",
        costs.pop() if len(costs) == 1 else math.nan,
        math.nan,
        totals,
        marg_sum,
        marg_sq,
        keep_totals=keep_totals,
    )
    return ReplayResult(**{f: getattr(base, f) for f in base.__dataclass_fields__}, n_forwarded=n_fwd, forwarded_clicks=n_clicks, n_updates=n_upd, skipped_events=skipped)


def synthesize_traces(config: SimConfig, names: Sequence[str] | None = None, *, seed: int | None = None) -> tuple[list[TraceEvent], list[str]]:
    """Traces generated from the model itself: every item is presented and
    ``clicked`` is its latent relevance.  Returns the events and the full user
    cohort (including users who never saw an item)."""
    seed = config.seed if seed is None else seed
    names = list(names) if names is not None else [a.name or f"cat{idx}" for idx, a in enumerate(config.arms)]
    alphas = np.array([a.alpha0 for a in config.arms])
    betas = np.array([a.beta0 for a in config.arms])
    cum = np.cumsum([a.p_x for a in config.arms])
    cum[-1] = 1.0
    world = StreamFactory(seed)
    width = len(str(config.n_users - 1))
    events, cohort = [], []
    for u in range(config.n_users):
        uid = f"u{u:0{width}d}"
        cohort.append(uid)
        d = draw_user(world, u, alphas, betas, config.gamma, config.cap, True)
        arm = np.minimum(np.searchsorted(cum, d.category_u, side="right"), len(cum) - 1)
        clicked = d.relevance_u < d.theta[arm]
        events.extend(TraceEvent(uid, step, names[arm_idx], bool(hit)) for step, (arm_idx, hit) in enumerate(zip(arm, clicked)))
    return events, cohort
