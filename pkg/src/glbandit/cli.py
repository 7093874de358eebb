"""Command-line surface: run, grid, check, bench.

Exit codes: 0 success, 1 runtime failure (the failing run is identified on
stderr), 2 bad configuration or arguments.  Seed precedence for commands
that take one: --seed flag > GLB_SEED environment variable > config file.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .harness import (
    PolicySpec,
    SyntheticEnvSpec,
    grid_search,
    run_diagnostics,
    run_experiment,
    scaling_report,
    timing_report,
)
from .io import (
    ConfigError,
    atomic_output_dir,
    load_config,
    write_grid_outputs,
    write_summary,
    write_timing,
    write_traces_csv,
)


def _resolve_seed(flag_seed, file_seed: int) -> int:
    if flag_seed is not None:
        return int(flag_seed)
    env_seed = os.environ.get("GLB_SEED")
    if env_seed is not None:
        try:
            return int(env_seed)
        except ValueError:
            raise ConfigError(f"GLB_SEED must be an integer, got {env_seed!r}")
    return file_seed


def _env_arm_count(cfg) -> int:
    if hasattr(cfg.env, "K"):
        return int(cfg.env.K)
    return 0


def _cmd_run(args) -> int:
    cfg, _ = load_config(args.config)
    cfg = replace(cfg, base_seed=_resolve_seed(args.seed, cfg.base_seed))
    result = run_experiment(cfg)
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    dead_policies = [
        spec.name for spec in cfg.policies if spec.name not in result.aggregates
    ]
    with atomic_output_dir(args.out) as staging:
        write_traces_csv(staging / "traces.csv", result.traces)
        write_summary(
            staging / "summary.json",
            result.aggregates,
            result.traces,
            _env_arm_count(cfg),
        )
        write_timing(staging / "timing.json", timing_report(result.traces))
    if dead_policies:
        print(
            f"error: no surviving repetitions for policies {dead_policies}",
            file=sys.stderr,
        )
        return 1
    print(f"wrote traces.csv, summary.json, timing.json to {args.out}")
    return 0


def _cmd_grid(args) -> int:
    cfg, grid = load_config(args.config)
    if grid is None:
        raise ConfigError("config: grid search needs a 'grid' section")
    cfg = replace(cfg, base_seed=_resolve_seed(args.seed, cfg.base_seed))
    result = grid_search(cfg, grid)
    with atomic_output_dir(args.out) as staging:
        write_grid_outputs(staging, result)
    for policy, score in sorted(result.best.items()):
        print(
            f"{policy}: best {score.params} "
            f"(mean final regret {score.mean_final_regret:.4f})"
        )
    print(f"wrote scores.csv, best.json to {args.out}")
    return 0


def format_diagnostics(report) -> str:
    lines = [f"diagnostics seed={report.seed}"]
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        stats = " ".join(
            f"{key}={value!r}" for key, value in sorted(check.stats.items())
        )
        lines.append(f"{status} {check.name} {stats}")
    lines.append("result: " + ("PASS" if report.passed else "FAIL"))
    return "\n".join(lines) + "\n"


def _cmd_check(args) -> int:
    seed = _resolve_seed(args.seed, 0)
    report = run_diagnostics(seed)
    sys.stdout.write(format_diagnostics(report))
    return 0 if report.passed else 1


def _cmd_bench(args) -> int:
    try:
        t_values = [int(part) for part in args.t.split(",") if part]
    except ValueError:
        raise ConfigError(f"--t must be a comma-separated list of integers: {args.t!r}")
    if not t_values:
        raise ConfigError("--t must name at least one horizon")
    if args.config is not None:
        cfg, _ = load_config(args.config)
        env, policies, file_seed = cfg.env, list(cfg.policies), cfg.base_seed
    else:
        # Default scaling probe: the simulation benchmark's constant-work
        # policy against the per-round-MLE baseline.
        env = SyntheticEnvSpec(d=6, K=100, link="logistic")
        policies = [
            PolicySpec(
                "sgd-ts",
                {"tau_multiplier": 6, "eta": 1.0, "a1": 0.05, "a2": 0.05,
                 "mle_ridge": 5.0, "ball_radius": 0.5},
            ),
            PolicySpec("ucb-glm", {"tau_multiplier": 3, "beta": 1.0}),
        ]
        file_seed = 0
    seed = _resolve_seed(args.seed, file_seed)
    report = scaling_report(
        env,
        policies,
        t_values,
        repetitions=args.reps,
        base_seed=seed,
    )
    smallest = min(t_values)
    for policy, per_t in report.items():
        parts = [f"T={T}: {per_t[T]:.0f} ns/round" for T in t_values]
        ratio = per_t[max(t_values)] / per_t[smallest] if per_t[smallest] else 0.0
        print(f"{policy}: " + ", ".join(parts) + f" (max/min ratio {ratio:.2f})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glb",
        description="Generalized linear bandit benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config", help="path to a JSON experiment config")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, default=None, help="override base seed")
    run.set_defaults(func=_cmd_run)

    grid = sub.add_parser("grid", help="grid-search hyperparameters")
    grid.add_argument("config", help="path to a JSON experiment config with a grid")
    grid.add_argument("--out", required=True, help="output directory")
    grid.add_argument("--seed", type=int, default=None, help="override base seed")
    grid.set_defaults(func=_cmd_grid)

    check = sub.add_parser("check", help="run the empirical diagnostics suite")
    check.add_argument("--seed", type=int, default=None, help="diagnostics seed")
    check.set_defaults(func=_cmd_check)

    bench = sub.add_parser("bench", help="per-round cost scaling report")
    bench.add_argument(
        "config",
        nargs="?",
        default=None,
        help="optional JSON experiment config (default: built-in benchmark pair)",
    )
    bench.add_argument(
        "--t", default="500,1000,2000", help="comma-separated horizons"
    )
    bench.add_argument("--reps", type=int, default=2, help="repetitions per horizon")
    bench.add_argument("--seed", type=int, default=None, help="override base seed")
    bench.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileExistsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surface runtime failures as exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
