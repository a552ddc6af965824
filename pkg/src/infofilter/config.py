"""Experiment configuration: a versioned JSON document validated against a schema.

Example::

    {
      "schema_version": 1,
      "arms": [{"name": "news", "alpha0": 1, "beta0": 19, "p_x": 1.0}],
      "gamma": 0.999,
      "costs": [0, 0.05, 0.1],
      "policies": [{"kind": "optimal"}, {"kind": "exploit"},
                   {"kind": "ucb", "rho_grid": [0.65, 0.95], "tune": true},
                   {"kind": "thompson"}],
      "n_users": 100000
    }

An arm gives either ``p_x`` (shares of the lifetime, summing to one, with a
common ``gamma`` or ``gamma_grid``) or ``gamma_x`` (its effective discount, in
which case ``gamma`` and the shares are implied).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .dp_solver import DEFAULT_EPSILON, DEFAULT_MAX_USABLE_DEPTH
from .errors import ConfigError
from .policies import PolicyKind
from .simulator import DEFAULT_WINDOW, CategoryArm, SimConfig, arms_from_effective_discounts

SCHEMA_VERSION = 1

_PROB_OPEN = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "required": ["schema_version", "arms", "costs", "policies"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "arms": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["alpha0", "beta0"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "alpha0": _POSITIVE,
                    "beta0": _POSITIVE,
                    "p_x": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                    "gamma_x": _PROB_OPEN,
                },
            },
        },
        "gamma": _PROB_OPEN,
        "gamma_grid": {"type": "array", "minItems": 1, "items": _PROB_OPEN},
        "costs": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "policies": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["kind"],
                "additionalProperties": False,
                "properties": {
                    "kind": {"enum": [kind.value for kind in PolicyKind]},
                    "label": {"type": "string", "minLength": 1},
                    "rho": _PROB_OPEN,
                    "rho_grid": {"type": "array", "minItems": 1, "items": _PROB_OPEN},
                    "tune": {"type": "boolean"},
                    "tune_users": {"type": "integer", "minimum": 1},
                    "thresholds": {"type": "string", "minLength": 1},
                },
            },
        },
        "n_users": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "epsilon_policy": _PROB_OPEN,
        "step_cap": {"type": ["integer", "null"], "minimum": 1},
        "window": {"type": "integer", "minimum": 1},
        "usable_depth": {"type": ["integer", "null"], "minimum": 0},
        "max_usable_depth": {"type": "integer", "minimum": 1},
        "value_depth": {"type": ["integer", "null"], "minimum": 1},
        "marginals": {"type": "boolean"},
        "train_fraction": _PROB_OPEN,
        "min_visits": {"type": "integer", "minimum": 0},
        "max_visits": {"type": "integer", "minimum": 0},
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "results": {"type": "string", "minLength": 1},
                "marginals": {"type": "string", "minLength": 1},
                "fit": {"type": "string", "minLength": 1},
            },
        },
    },
}


@dataclass(frozen=True)
class PolicyEntry:
    kind: PolicyKind
    label: str | None = None
    rho: float | None = None
    rho_grid: tuple[float, ...] = ()
    tune: bool = False
    tune_users: int | None = None
    thresholds: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    arms: tuple[CategoryArm, ...]
    gammas: tuple[float, ...]
    costs: tuple[float, ...]
    policies: tuple[PolicyEntry, ...]
    n_users: int = 10_000
    seed: int | None = None
    epsilon_policy: float = DEFAULT_EPSILON
    step_cap: int | None = None
    window: int = DEFAULT_WINDOW
    usable_depth: int | None = None
    max_usable_depth: int = DEFAULT_MAX_USABLE_DEPTH
    value_depth: int | None = None
    marginals: bool = False
    train_fraction: float = 0.5
    min_visits: int = 30
    max_visits: int = 510
    outputs: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def sim_config(self, gamma: float, seed: int) -> SimConfig:
        return SimConfig(self.arms, gamma, self.n_users, seed, step_cap=self.step_cap, window=self.window)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def _field_path(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def parse_config(raw: dict, base_dir: Path = Path(".")) -> ExperimentConfig:
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"config field schema_version: expected {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        e = errors[0]
        raise ConfigError(f"config field {_field_path(e)}: {e.message}")

    arms_raw = raw["arms"]
    with_share = ["p_x" in a for a in arms_raw]
    with_discount = ["gamma_x" in a for a in arms_raw]
    names = [a.get("name", f"cat{idx}") for idx, a in enumerate(arms_raw)]
    if len(set(names)) != len(names):
        raise ConfigError("config field arms: arm names must be unique")
    if any(s and d for s, d in zip(with_share, with_discount)):
        raise ConfigError("config field arms: give either p_x or gamma_x for an arm, not both")

    if all(with_discount):
        if "gamma" in raw or "gamma_grid" in raw:
            raise ConfigError("config field gamma: implied by per-arm gamma_x; remove it")
        gamma, arms = arms_from_effective_discounts(
            [(a["alpha0"], a["beta0"]) for a in arms_raw], [a["gamma_x"] for a in arms_raw], names
        )
        gammas = (gamma,)
    elif all(with_share) or (len(arms_raw) == 1 and not any(with_discount)):
        if ("gamma" in raw) == ("gamma_grid" in raw):
            raise ConfigError("config field gamma: give exactly one of gamma or gamma_grid")
        gammas = (raw["gamma"],) if "gamma" in raw else tuple(raw["gamma_grid"])
        arms = [CategoryArm(a["alpha0"], a["beta0"], a.get("p_x", 1.0), name) for a, name in zip(arms_raw, names)]
        total = sum(a.p_x for a in arms)
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(f"config field arms: p_x must sum to 1, got {total!r}")
    else:
        raise ConfigError("config field arms: every arm needs p_x, or every arm needs gamma_x")

    policies = []
    for idx, p in enumerate(raw["policies"]):
        kind = PolicyKind(p["kind"])
        if kind is PolicyKind.UCB and "rho" not in p and "rho_grid" not in p:
            raise ConfigError(f"config field policies/{idx}: UCB needs rho or rho_grid")
        if p.get("tune") and "rho_grid" not in p:
            raise ConfigError(f"config field policies/{idx}/tune: tuning needs a rho_grid")
        if "thresholds" in p and kind is not PolicyKind.OPTIMAL:
            raise ConfigError(f"config field policies/{idx}/thresholds: only OPTIMAL policies load thresholds")
        policies.append(
            PolicyEntry(
                kind,
                p.get("label"),
                p.get("rho"),
                tuple(p.get("rho_grid", ())),
                bool(p.get("tune", False)),
                p.get("tune_users"),
                p.get("thresholds"),
            )
        )

    min_v, max_v = raw.get("min_visits", 30), raw.get("max_visits", 510)
    if min_v > max_v:
        raise ConfigError(f"config field min_visits: {min_v} exceeds max_visits {max_v}")

    return ExperimentConfig(
        arms=tuple(arms),
        gammas=gammas,
        costs=tuple(raw["costs"]),
        policies=tuple(policies),
        n_users=raw.get("n_users", 10_000),
        seed=raw.get("seed"),
        epsilon_policy=raw.get("epsilon_policy", DEFAULT_EPSILON),
        step_cap=raw.get("step_cap"),
        window=raw.get("window", DEFAULT_WINDOW),
        usable_depth=raw.get("usable_depth"),
        max_usable_depth=raw.get("max_usable_depth", DEFAULT_MAX_USABLE_DEPTH),
        value_depth=raw.get("value_depth"),
        marginals=raw.get("marginals", False),
        train_fraction=raw.get("train_fraction", 0.5),
        min_visits=min_v,
        max_visits=max_v,
        outputs=dict(raw.get("outputs", {})),
        base_dir=base_dir,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path}: top level must be an object")
    return parse_config(raw, path.parent)
