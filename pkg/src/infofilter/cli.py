"""Command-line front end.

Exit codes:
  0  success
  2  configuration or usage error
  3  resource error (memory budget or depth cap)
  4  trace parse error, or traces unusable for fitting

Data summaries go to stdout; diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig, PolicyEntry, load_config
from .dp_solver import CategoryModel, ThresholdTable, effective_discount, solve, solve_thresholds
from .errors import ConfigError, DegenerateSampleError, DomainError, DepthExceededError, ResourceError, TraceParseError
from .estimation import (
    DEFAULT_MAX_VISITS,
    DEFAULT_MIN_VISITS,
    FitReport,
    fit_traces,
    read_traces,
    replay,
    split_users,
)
from .policies import PolicyKind, PolicySpec, tune_ucb
from .simulator import (
    make_policy,
    simulate_multi,
    simulate_single,
    write_marginals_csv,
    write_results_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE, EXIT_TRACE = 0, 2, 3, 4
log = logging.getLogger("infofilter")


def threshold_filename(arm: str, gamma_x: float, cost: float) -> str:
    return f"thresholds_{arm}_gx{gamma_x!r}_c{cost!r}.csv"


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _epsilon(args, cfg: ExperimentConfig | None) -> float:
    if args.epsilon is not None:
        if not 0.0 < args.epsilon < 1.0:
            raise ConfigError(f"--epsilon must lie in (0, 1), got {args.epsilon}")
        return args.epsilon
    return cfg.epsilon_policy


def _models(cfg: ExperimentConfig, gamma: float, cost: float) -> list[tuple[str, CategoryModel]]:
    return [
        (a.name, CategoryModel(a.alpha0, a.beta0, effective_discount(a.p_x, gamma), cost))
        for a in cfg.arms
    ]


# --- solve -----------------------------------------------------------------


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    eps = _epsilon(args, cfg)
    out = _out_dir(args)
    print("arm\tgamma_x\tc\tM_use\tM\tepsilon_policy\tfile")
    for gamma in cfg.gammas:
        for cost in cfg.costs:
            for name, model in _models(cfg, gamma, cost):
                table = solve_thresholds(model, eps, cfg.usable_depth, max_usable_depth=cfg.max_usable_depth)
                path = out / threshold_filename(name, model.gamma_x, cost)
                table.to_csv(path)
                if table.irregular_levels:
                    log.warning("%s: %d levels with non-threshold forwarding sets", path.name, table.irregular_levels)
                if cfg.value_depth:
                    values = solve(model, cfg.value_depth)
                    values.to_csv(out / path.name.replace("thresholds_", "values_", 1))
                print(f"{name}\t{model.gamma_x!r}\t{cost!r}\t{table.M_use}\t{table.M}\t{eps!r}\t{path.name}")
    return EXIT_OK


# --- simulate --------------------------------------------------------------


def _load_thresholds(entry: PolicyEntry, cfg: ExperimentConfig, name: str, model: CategoryModel, eps: float) -> ThresholdTable:
    path = cfg.resolve(entry.thresholds)
    if path.is_dir():
        path = path / threshold_filename(name, model.gamma_x, model.cost)
    elif len(cfg.arms) > 1 or len(cfg.costs) > 1 or len(cfg.gammas) > 1:
        raise ConfigError("config field policies/thresholds: a single file serves one arm, cost and gamma; point to a solve output directory")
    if not path.exists():
        raise ConfigError(f"config field policies/thresholds: {path} does not exist")
    return ThresholdTable.from_csv(path, model, eps)


def _family(entry: PolicyEntry, rho, label, cfg, models, eps, seed) -> list[PolicySpec]:
    cache: dict[CategoryModel, PolicySpec] = {}
    out = []
    for name, model in models:
        if entry.thresholds is not None:
            spec = PolicySpec(PolicyKind.OPTIMAL, model.cost, table=_load_thresholds(entry, cfg, name, model, eps), label=label, epsilon_policy=eps)
        else:
            if model not in cache:
                arm_rho = rho
                if entry.tune:
                    arm_rho = tune_ucb(model, entry.rho_grid, entry.tune_users or cfg.n_users, seed + 1, step_cap=cfg.step_cap)
                    log.info("tuned rho for %s at c=%r: %r", name, model.cost, arm_rho)
                cache[model] = make_policy(
                    entry.kind, model, rho=arm_rho, label=label, epsilon_policy=eps,
                    n_users=cfg.n_users, M_use=cfg.usable_depth,
                )
            spec = cache[model]
        out.append(spec)
    return out


def _expand(entry: PolicyEntry):
    """(rho, label) pairs for one config policy entry."""
    if entry.kind is not PolicyKind.UCB:
        return [(None, entry.label)]
    if entry.tune:
        return [(None, entry.label or "ucb_tuned")]
    rhos = list(entry.rho_grid) or [entry.rho]
    if entry.rho is not None and entry.rho_grid:
        rhos = [entry.rho, *entry.rho_grid]
    return [(r, entry.label if len(rhos) == 1 else None) for r in rhos]


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    eps = _epsilon(args, cfg)
    out = _out_dir(args)
    results = []
    for gamma in cfg.gammas:
        sim_cfg = cfg.sim_config(gamma, args.seed)
        for cost in cfg.costs:
            models = _models(cfg, gamma, cost)
            for entry in cfg.policies:
                for rho, label in _expand(entry):
                    family = _family(entry, rho, label, cfg, models, eps, args.seed)
                    if len(models) == 1:
                        res = simulate_single(
                            models[0][1], family[0], cfg.n_users, args.seed,
                            step_cap=cfg.step_cap, window=cfg.window, threads=args.threads, keep_totals=False,
                        )
                    else:
                        res = simulate_multi(sim_cfg, family, seed=args.seed, threads=args.threads, keep_totals=False)
                        res.gamma_x = gamma
                    results.append(res)
                    print(f"{res.policy}\tc={cost!r}\tgamma={gamma!r}\t{res.total_mean:.6g} +/- {res.total_ci_half_width:.3g}")
                    if cfg.marginals:
                        write_marginals_csv(out / f"marginals_{res.policy}_g{gamma!r}_c{cost!r}.csv", res)
                    if res.n_truncated:
                        log.warning("%s: %d lifetimes truncated at the step cap", res.policy, res.n_truncated)
    write_results_csv(out / cfg.outputs.get("results", "results.csv"), results)
    return EXIT_OK


# --- estimate --------------------------------------------------------------


def _read_trace_file(path):
    try:
        return read_traces(path)
    except OSError as exc:
        raise TraceParseError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError as exc:
        raise TraceParseError(f"{path} is not UTF-8 ({exc.reason})") from None


def cmd_estimate(args) -> int:
    cfg = load_config(args.config) if args.config else None
    events = _read_trace_file(args.traces)
    min_v = args.min_visits if args.min_visits is not None else (cfg.min_visits if cfg else DEFAULT_MIN_VISITS)
    max_v = args.max_visits if args.max_visits is not None else (cfg.max_visits if cfg else DEFAULT_MAX_VISITS)
    fraction = args.train_fraction if args.train_fraction is not None else (cfg.train_fraction if cfg else 0.5)
    if min_v > max_v:
        raise ConfigError(f"--min-visits {min_v} exceeds --max-visits {max_v}")
    users = sorted({e.user_id for e in events})
    if len(users) < 2:
        train, test = users, []
    else:
        train, test = split_users(users, fraction, args.seed)
    report = fit_traces(events, train, min_visits=min_v, max_visits=max_v)
    out = _out_dir(args)
    report.to_json(out / "fit.json")
    (out / "train_users.txt").write_text("".join(u + "\n" for u in train), encoding="utf-8")
    (out / "test_users.txt").write_text("".join(u + "\n" for u in test), encoding="utf-8")
    print("category\talpha0\tbeta0\tgamma_x\tn_train_users")
    for name, cf in sorted(report.categories.items()):
        print(f"{name}\t{cf.alpha0!r}\t{cf.beta0!r}\t{cf.gamma_x!r}\t{cf.n_train_users}")
    return EXIT_OK


# --- replay ----------------------------------------------------------------


def _replay_specs(kind: PolicyKind, rho, label, fit: FitReport, cost: float, eps: float, depth: int) -> dict[str, PolicySpec]:
    specs = {}
    for name, cf in fit.categories.items():
        if kind is PolicyKind.OPTIMAL:
            specs[name] = make_policy(kind, cf.model(cost), label=label, epsilon_policy=eps, M_use=depth)
        else:
            specs[name] = PolicySpec(kind, cost, rho=rho, label=label, epsilon_policy=eps)
    return specs


def cmd_replay(args) -> int:
    cfg = load_config(args.config) if args.config else None
    eps = _epsilon(args, cfg) if cfg else (args.epsilon or 1e-6)
    fit = FitReport.from_json(args.fit)
    events = _read_trace_file(args.traces)
    users = None
    if args.users:
        users = [u for u in Path(args.users).read_text(encoding="utf-8").split() if u]
        keep = set(users)
        events = [e for e in events if e.user_id in keep]

    if cfg is not None:
        costs = cfg.costs
        entries = [(e.kind, rho, label) for e in cfg.policies for rho, label in _expand(e)]
        if any(e.tune for e in cfg.policies):
            raise ConfigError("config field policies/tune: replay takes fixed rho values")
    else:
        if args.policy is None or args.cost is None:
            raise ConfigError("replay needs --config, or --policy and --cost")
        costs = [args.cost]
        entries = [(PolicyKind(args.policy), args.rho, None)]

    # deepest category stream any user reaches bounds the threshold depth that decisions need
    runs: dict[tuple[str, str], int] = {}
    for e in events:
        runs[(e.user_id, e.category)] = runs.get((e.user_id, e.category), 0) + 1
    depth = max(runs.values(), default=1)
    limit = cfg.max_usable_depth if cfg else 100_000
    if depth > limit:
        raise ResourceError(f"a category stream of {depth} items exceeds the maximum usable depth {limit}")

    results = []
    for cost in costs:
        for kind, rho, label in entries:
            specs = _replay_specs(kind, rho, label, fit, cost, eps, depth)
            res = replay(events, fit, specs, users=users, seed=args.seed, keep_totals=False)
            results.append(res)
            print(f"{res.policy}\tc={cost!r}\t{res.total_mean:.6g} +/- {res.total_ci_half_width:.3g}\tforwarded={res.n_forwarded}")
            if res.skipped_events:
                log.warning("%s at c=%r: skipped %d events of unfitted categories", res.policy, cost, res.skipped_events)
    out = _out_dir(args)
    write_results_csv(out / (cfg.outputs.get("results", "replay.csv") if cfg else "replay.csv"), results)
    return EXIT_OK


# --- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="infofilter", description="Optimal forwarding policies for Bayesian information filtering.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, seed_required: bool):
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--epsilon", type=float, default=None, help="policy gap tolerance (overrides config)")
        p.add_argument("--threads", type=int, default=1, help="maximum worker threads")
        p.add_argument("--seed", type=_seed, required=seed_required, default=None, help="master seed (unsigned 64-bit)")

    p = sub.add_parser("solve", help="solve threshold tables for every arm and cost")
    p.add_argument("--config", required=True)
    common(p, seed_required=False)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="idealized Monte Carlo over the config grid")
    p.add_argument("--config", required=True)
    common(p, seed_required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="fit priors and effective discounts from traces")
    p.add_argument("traces")
    p.add_argument("--config")
    p.add_argument("--min-visits", type=int, default=None)
    p.add_argument("--max-visits", type=int, default=None)
    p.add_argument("--train-fraction", type=float, default=None)
    common(p, seed_required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("replay", help="replay traces against policies")
    p.add_argument("traces")
    p.add_argument("--fit", required=True, help="FitReport JSON from estimate")
    p.add_argument("--config")
    p.add_argument("--users", help="file of user ids to replay (one per line), e.g. test_users.txt")
    p.add_argument("--policy", choices=[kind.value for kind in PolicyKind])
    p.add_argument("--cost", type=float)
    p.add_argument("--rho", type=float)
    common(p, seed_required=True)
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ResourceError, DepthExceededError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (TraceParseError, DegenerateSampleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRACE


if __name__ == "__main__":
    sys.exit(main())
