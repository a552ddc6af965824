"""Optimal exploration/exploitation policies for Bayesian information filtering.

Each category is a one-armed Beta-Bernoulli bandit against a known forwarding
cost; ``dp_solver`` computes its value bounds and forwarding thresholds,
``policies`` holds the optimal rule and the benchmarks, ``simulator`` and
``estimation`` evaluate them on synthetic users and on presentation traces.
"""
from .dp_solver import (
    Bound,
    CategoryModel,
    Decision,
    ThresholdTable,
    ValueTable,
    decide_optimal,
    effective_discount,
    q_forward,
    solve,
    solve_thresholds,
    thresholds,
    voi,
)
from .estimation import FitReport, TraceEvent, fit_beta, fit_geometric, fit_traces, read_traces, replay, split_users
from .policies import PolicyKind, PolicySpec, policy_decide, tune_ucb
from .posterior import BetaState, Feedback, StreamFactory, quantile, sample, update
from .simulator import CategoryArm, SimConfig, SimResult, lifetime_check, simulate_multi, simulate_single, stopping_audit

__all__ = [
    "BetaState", "Bound", "CategoryArm", "CategoryModel", "Decision", "Feedback", "FitReport",
    "PolicyKind", "PolicySpec", "SimConfig", "SimResult", "StreamFactory", "ThresholdTable",
    "TraceEvent", "ValueTable", "decide_optimal", "effective_discount", "fit_beta",
    "fit_geometric", "fit_traces", "lifetime_check", "policy_decide", "q_forward", "quantile",
    "read_traces", "replay", "sample", "simulate_multi", "simulate_single", "solve",
    "solve_thresholds", "split_users", "stopping_audit", "thresholds", "tune_ucb", "update", "voi",
]
