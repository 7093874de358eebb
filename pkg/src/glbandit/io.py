"""Config parsing and result serialization.

Configs are strict JSON documents (unknown fields rejected, version
checked); traces go to CSV and aggregates to JSON.  Floats are written in
their shortest round-trip form so outputs diff cleanly and parse back to
the exact same doubles.  Output directories are staged in a temp sibling
and renamed into place, so a failed run never leaves a partial directory.
"""

from __future__ import annotations

import csv
import json
import os
import shutil
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .harness import (
    ClusteredEnvSpec,
    ExperimentConfig,
    GridResult,
    GridSpec,
    PolicySpec,
    RegretTrace,
    SyntheticEnvSpec,
    TimingReport,
)

__all__ = [
    "ConfigError",
    "CONFIG_VERSION",
    "load_config",
    "parse_config",
    "write_traces_csv",
    "read_traces_csv",
    "write_summary",
    "write_timing",
    "write_grid_outputs",
    "atomic_output_dir",
]

CONFIG_VERSION = 1


class ConfigError(ValueError):
    """Malformed configuration; the message carries a field or line hint."""


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise ConfigError(f"{path}: missing required field '{key}'")
    return obj[key]


def _reject_unknown(obj: dict, allowed: set, path: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown fields {sorted(unknown)}")


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value


def _as_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _parse_environment(obj, path: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object")
    kind = _require(obj, "type", path)
    if kind == "synthetic":
        _reject_unknown(obj, {"type", "d", "K", "link", "noise_sigma"}, path)
        link = obj.get("link", "logistic")
        if link not in ("logistic", "identity"):
            raise ConfigError(f"{path}.link: unknown link {link!r}")
        return SyntheticEnvSpec(
            d=_as_int(_require(obj, "d", path), f"{path}.d"),
            K=_as_int(_require(obj, "K", path), f"{path}.K"),
            link=link,
            noise_sigma=_as_number(obj.get("noise_sigma", 0.1), f"{path}.noise_sigma"),
        )
    if kind == "clustered":
        _reject_unknown(obj, {"type", "csv_path", "K", "scenario"}, path)
        scenario = obj.get("scenario", "centroid")
        if scenario not in ("centroid", "resample"):
            raise ConfigError(f"{path}.scenario: unknown scenario {scenario!r}")
        csv_path = _require(obj, "csv_path", path)
        if not isinstance(csv_path, str):
            raise ConfigError(f"{path}.csv_path: expected a string")
        return ClusteredEnvSpec(
            csv_path=csv_path,
            K=_as_int(_require(obj, "K", path), f"{path}.K"),
            scenario=scenario,
        )
    raise ConfigError(f"{path}.type: unknown environment type {kind!r}")


def _parse_policies(obj, path: str) -> tuple:
    if not isinstance(obj, list) or not obj:
        raise ConfigError(f"{path}: expected a nonempty list")
    specs = []
    for i, entry in enumerate(obj):
        here = f"{path}[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{here}: expected an object")
        _reject_unknown(entry, {"name", "params"}, here)
        name = _require(entry, "name", here)
        params = entry.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError(f"{here}.params: expected an object")
        specs.append(PolicySpec(name=name, params=dict(params)))
    return tuple(specs)


def _parse_grid(obj, path: str) -> GridSpec:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object")
    _reject_unknown(obj, {"exploration_rates", "tau_multipliers", "etas"}, path)
    kwargs = {}
    for key in ("exploration_rates", "tau_multipliers", "etas"):
        if key in obj:
            values = obj[key]
            if not isinstance(values, list) or not values:
                raise ConfigError(f"{path}.{key}: expected a nonempty list")
            kwargs[key] = tuple(
                _as_number(v, f"{path}.{key}[{i}]") for i, v in enumerate(values)
            )
    try:
        return GridSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def parse_config(doc) -> tuple[ExperimentConfig, GridSpec | None]:
    """Validate a parsed JSON document into typed experiment/grid specs."""
    if not isinstance(doc, dict):
        raise ConfigError("config: expected a JSON object at top level")
    _reject_unknown(
        doc,
        {
            "version",
            "environment",
            "policies",
            "T",
            "repetitions",
            "base_seed",
            "parallelism",
            "grid",
        },
        "config",
    )
    version = _as_int(_require(doc, "version", "config"), "config.version")
    if version != CONFIG_VERSION:
        raise ConfigError(
            f"config.version: expected {CONFIG_VERSION}, found {version}"
        )
    env = _parse_environment(_require(doc, "environment", "config"), "config.environment")
    policies = _parse_policies(_require(doc, "policies", "config"), "config.policies")
    T = _as_int(_require(doc, "T", "config"), "config.T")
    repetitions = _as_int(doc.get("repetitions", 10), "config.repetitions")
    base_seed = _as_int(doc.get("base_seed", 0), "config.base_seed")
    parallelism = _as_int(doc.get("parallelism", 1), "config.parallelism")
    try:
        cfg = ExperimentConfig(
            env=env,
            policies=policies,
            T=T,
            repetitions=repetitions,
            base_seed=base_seed,
            parallelism=parallelism,
        )
    except ValueError as exc:
        raise ConfigError(f"config: {exc}") from None
    grid = _parse_grid(doc["grid"], "config.grid") if "grid" in doc else None
    return cfg, grid


def load_config(path) -> tuple[ExperimentConfig, GridSpec | None]:
    """Read and validate a config file; JSON errors carry line/column."""
    try:
        with open(path) as handle:
            doc = json.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from None
    return parse_config(doc)


# ---------------------------------------------------------------------------
# Outputs


@contextmanager
def atomic_output_dir(target):
    """Stage files in a temp sibling directory, rename into place on success.

    Refuses to clobber an existing nonempty target.
    """
    target = Path(target)
    if target.exists() and any(target.iterdir()):
        raise FileExistsError(f"output directory {target} exists and is not empty")
    target.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(
        tempfile.mkdtemp(prefix=f".{target.name}.tmp-", dir=target.parent)
    )
    try:
        yield staging
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    if target.exists():
        target.rmdir()
    os.replace(staging, target)


TRACE_COLUMNS = (
    "policy",
    "repetition",
    "round",
    "cumulative_regret",
    "instantaneous_regret",
    "chosen_arm",
)


def write_traces_csv(path, traces: list) -> None:
    """One row per (policy, repetition, round); floats in round-trip form.

    Wall-clock is deliberately not written here: the trace file is the
    deterministic record of a run, and timing lives in timing.json.
    """
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRACE_COLUMNS)
        for trace in traces:
            for i in range(trace.rounds):
                writer.writerow(
                    [
                        trace.policy,
                        trace.repetition,
                        i + 1,
                        repr(float(trace.cumulative_regret[i])),
                        repr(float(trace.instantaneous_regret[i])),
                        int(trace.chosen_arms[i]),
                    ]
                )


def read_traces_csv(path) -> list:
    """Rebuild the deterministic trace fields written by write_traces_csv."""
    rows: dict[tuple[str, int], list] = {}
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if tuple(header) != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace header: {header}")
        for row in reader:
            policy, rep, rnd, cum, inst, arm = row
            rows.setdefault((policy, int(rep)), []).append(
                (int(rnd), float(cum), float(inst), int(arm))
            )
    traces = []
    for (policy, rep), entries in rows.items():
        entries.sort()
        rounds = [e[0] for e in entries]
        if rounds != list(range(1, len(rounds) + 1)):
            raise ValueError(
                f"rounds for ({policy}, {rep}) are not contiguous from 1"
            )
        traces.append(
            RegretTrace(
                policy=policy,
                repetition=rep,
                cumulative_regret=np.array([e[1] for e in entries]),
                instantaneous_regret=np.array([e[2] for e in entries]),
                chosen_arms=np.array([e[3] for e in entries], dtype=int),
                policy_time_ns=0,
                mle_solves=0,
                sgd_steps=0,
            )
        )
    return traces


def _json_dump(path, payload) -> None:
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def summary_payload(aggregates: dict, traces: list, n_arms: int) -> dict:
    """Per-policy final regret stats, per-round means, and pull histograms."""
    payload: dict = {"policies": {}}
    by_policy: dict[str, list] = {}
    for trace in traces:
        by_policy.setdefault(trace.policy, []).append(trace)
    for policy, group in sorted(by_policy.items()):
        agg = aggregates.get(policy)
        histograms = {}
        for trace in sorted(group, key=lambda t: t.repetition):
            counts = np.bincount(trace.chosen_arms, minlength=n_arms)
            histograms[str(trace.repetition)] = [int(c) for c in counts]
        entry = {
            "repetitions": len(group),
            "failed_repetitions": sum(1 for t in group if t.failed),
            "arm_pull_counts": histograms,
        }
        if agg is not None:
            entry.update(
                {
                    "final_mean_regret": agg.final_mean,
                    "final_std_regret": agg.final_std,
                    "mean_cumulative_regret": [
                        float(v) for v in agg.mean_cumulative
                    ],
                }
            )
        payload["policies"][policy] = entry
    return payload


def write_summary(path, aggregates: dict, traces: list, n_arms: int) -> None:
    _json_dump(path, summary_payload(aggregates, traces, n_arms))


def write_timing(path, report: TimingReport) -> None:
    payload = {
        "policies": {
            name: {
                "total_seconds": timing.total_seconds,
                "mean_seconds": timing.mean_seconds,
                "mean_per_round_ns": timing.mean_per_round_ns,
                "mle_solves": timing.mle_solves,
                "sgd_steps": timing.sgd_steps,
            }
            for name, timing in sorted(report.policies.items())
        },
        "sgdts_ucbglm_ratio": report.sgdts_ucbglm_ratio,
    }
    _json_dump(path, payload)


def write_grid_outputs(directory, result: GridResult) -> None:
    directory = Path(directory)
    with open(directory / "scores.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["policy", "params", "mean_final_regret", "n_traces"])
        for score in result.scores:
            writer.writerow(
                [
                    score.policy,
                    json.dumps(score.params, sort_keys=True),
                    repr(score.mean_final_regret),
                    score.n_traces,
                ]
            )
    best_payload = {
        policy: {
            "params": score.params,
            "mean_final_regret": score.mean_final_regret,
        }
        for policy, score in sorted(result.best.items())
    }
    _json_dump(directory / "best.json", best_payload)
