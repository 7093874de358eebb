"""Experiment orchestration: runs, repetitions, grid search, diagnostics.

A run drives one policy against one seeded environment for T rounds and
records the regret trace plus policy-only wall-clock.  Experiments repeat
runs across seeds and aggregate pointwise; the grid search enumerates
hyperparameter combinations exhaustively.  The diagnostics suite replays
instrumented runs to verify the estimator convergence bound, the sampled
parameter's concentration, and its optimism floor empirically.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Optional, Union

import numpy as np

from .environments import SyntheticGlbEnv, cluster_dataset, load_table
from .estimators import (
    ConvergenceError,
    MleConfig,
    SingularSystemError,
    ProjectionBall,
    SgdAverager,
    sgd_update,
    solve_mle,
    theory_step_size,
)
from .glm import (
    GlmLink,
    ObservationBatch,
    aggregated_gradient,
    identity_link,
    logistic_link,
)
from .policies import (
    EpsilonGreedyPolicy,
    GlocPolicy,
    LaplaceTsPolicy,
    OraclePolicy,
    Policy,
    PracticalExploration,
    SgdTsPolicy,
    TheoryExploration,
    UcbGlmPolicy,
    UniformPolicy,
    policy_seed,
)

__all__ = [
    "SyntheticEnvSpec",
    "ClusteredEnvSpec",
    "PolicySpec",
    "ExperimentConfig",
    "GridSpec",
    "RegretTrace",
    "Aggregate",
    "ExperimentResult",
    "GridScore",
    "GridResult",
    "TimingReport",
    "build_env",
    "build_policy",
    "resolve_tau",
    "run_once",
    "run_experiment",
    "aggregate_traces",
    "grid_search",
    "timing_report",
    "scaling_report",
    "run_diagnostics",
    "CheckResult",
    "DiagnosticsReport",
    "OPTIMISM_FLOOR",
    "OPTIMISM_THRESHOLD",
]


# ---------------------------------------------------------------------------
# Specs


@dataclass(frozen=True)
class SyntheticEnvSpec:
    d: int
    K: int
    link: str = "logistic"
    noise_sigma: float = 0.1


@dataclass(frozen=True)
class ClusteredEnvSpec:
    csv_path: str
    K: int
    scenario: str = "centroid"


EnvSpec = Union[SyntheticEnvSpec, ClusteredEnvSpec]


@dataclass(frozen=True)
class PolicySpec:
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvSpec
    policies: tuple
    T: int
    repetitions: int = 10
    base_seed: int = 0
    parallelism: int = 1

    def __post_init__(self) -> None:
        if self.T < 0:
            raise ValueError("T must be nonnegative")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        object.__setattr__(self, "policies", tuple(self.policies))


DEFAULT_EXPLORATION_RATES = (0.01, 0.1, 1.0, 5.0, 10.0)
DEFAULT_TAU_MULTIPLIERS = tuple(range(1, 11))
DEFAULT_ETAS = (0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0)


@dataclass(frozen=True)
class GridSpec:
    exploration_rates: tuple = DEFAULT_EXPLORATION_RATES
    tau_multipliers: tuple = DEFAULT_TAU_MULTIPLIERS
    etas: tuple = DEFAULT_ETAS

    def __post_init__(self) -> None:
        for name in ("exploration_rates", "tau_multipliers", "etas"):
            values = tuple(getattr(self, name))
            if not values:
                raise ValueError(f"{name} grid must be nonempty")
            object.__setattr__(self, name, values)


# ---------------------------------------------------------------------------
# Builders


_LINKS = {"logistic": logistic_link, "identity": identity_link}


def _link_from_name(name: str) -> GlmLink:
    try:
        return _LINKS[name]()
    except KeyError:
        raise ValueError(f"unknown link {name!r}; expected one of {sorted(_LINKS)}")


def build_env(spec: EnvSpec, seed: int):
    if isinstance(spec, SyntheticEnvSpec):
        return SyntheticGlbEnv(
            d=spec.d,
            K=spec.K,
            link=_link_from_name(spec.link),
            seed=seed,
            noise_sigma=spec.noise_sigma,
        )
    if isinstance(spec, ClusteredEnvSpec):
        features, labels = load_table(spec.csv_path)
        return cluster_dataset(
            features, labels, K=spec.K, seed=seed, scenario=spec.scenario
        )
    raise ValueError(f"unknown environment spec {type(spec).__name__}")


def env_link(env) -> GlmLink:
    # Clustered arms carry Bernoulli rewards, so policies model them as
    # logistic bandits (matching how the source experiments treat them).
    if isinstance(env, SyntheticGlbEnv):
        return env.link
    return logistic_link()


def resolve_tau(params: dict, T: int, d: int) -> int:
    """Window length from an explicit ``tau`` or ``tau_multiplier`` C.

    The multiplier form is ``floor(C * max(log T, d))``.
    """
    tau = params.get("tau")
    multiplier = params.get("tau_multiplier")
    if (tau is None) == (multiplier is None):
        raise ValueError("exactly one of 'tau' and 'tau_multiplier' is required")
    if tau is not None:
        tau = int(tau)
    else:
        base = max(math.log(T), float(d)) if T >= 1 else float(d)
        tau = int(multiplier * base)
    if tau < 1:
        raise ValueError(f"resolved tau {tau} must be >= 1")
    return tau


def _take(params: dict, allowed: dict) -> dict:
    unknown = set(params) - set(allowed)
    if unknown:
        raise ValueError(f"unknown policy parameters: {sorted(unknown)}")
    merged = dict(allowed)
    merged.update(params)
    return merged


def build_policy(spec: PolicySpec, env, T: int) -> Policy:
    """Instantiate a policy from its named spec against one environment."""
    d, n_arms = env.d, env.K
    link = env_link(env)
    name, params = spec.name, spec.params
    if name == "uniform":
        _take(params, {})
        return UniformPolicy()
    if name == "oracle":
        _take(params, {})
        return OraclePolicy(env)
    if name == "sgd-ts":
        p = _take(
            params,
            {
                "mode": "practical",
                "tau": None,
                "tau_multiplier": None,
                "eta": 1.0,
                "a1": 1.0,
                "a2": 1.0,
                "noise_scale": 0.5,
                "slope_floor_mle": 0.045,
                "slope_floor": 0.045,
                "alpha": None,
                "lambda_f": None,
                "mle_ridge": 0.1,
                "ball_radius": 2.0,
            },
        )
        tau = resolve_tau(p, T, d)
        if p["mode"] == "practical":
            schedule = PracticalExploration(a1=p["a1"], a2=p["a2"], eta=p["eta"])
        elif p["mode"] == "theory":
            alpha = p["alpha"]
            if alpha is None:
                if p["lambda_f"] is None:
                    raise ValueError(
                        "theory mode needs 'alpha' or 'lambda_f' to derive it"
                    )
                alpha = max(p["slope_floor"], float(d), math.log(max(T, 2))) / p[
                    "lambda_f"
                ]
            schedule = TheoryExploration(
                noise_scale=p["noise_scale"],
                slope_floor_mle=p["slope_floor_mle"],
                slope_floor=p["slope_floor"],
                alpha=alpha,
                tau=tau,
                d=d,
                n_arms=n_arms,
                horizon=max(T, 1),
            )
        else:
            raise ValueError(f"unknown sgd-ts mode {p['mode']!r}")
        return SgdTsPolicy(
            d=d,
            link=link,
            tau=tau,
            schedule=schedule,
            ball_radius=p["ball_radius"],
            mle_config=MleConfig(ridge=p["mle_ridge"], gradient_tolerance=1e-4),
        )
    if name == "ucb-glm":
        p = _take(
            params,
            {
                "tau": None,
                "tau_multiplier": None,
                "beta": 1.0,
                "reg": 1.0,
                "mle_ridge": 0.1,
            },
        )
        tau = resolve_tau(p, T, d)
        return UcbGlmPolicy(
            d=d,
            link=link,
            tau=tau,
            beta=p["beta"],
            reg=p["reg"],
            mle_config=MleConfig(ridge=p["mle_ridge"], gradient_tolerance=1e-4),
        )
    if name == "gloc":
        p = _take(
            params,
            {"beta": 1.0, "eta": 1.0, "lambda_init": 1.0, "radius": 2.0},
        )
        return GlocPolicy(
            d=d,
            link=link,
            beta=p["beta"],
            eta=p["eta"],
            lambda_init=p["lambda_init"],
            radius=p["radius"],
        )
    if name == "laplace-ts":
        p = _take(params, {"q0": 1.0})
        return LaplaceTsPolicy(d=d, link=link, q0=p["q0"])
    if name == "epsilon-greedy":
        p = _take(params, {"a": 1.0, "mle_ridge": 0.1})
        return EpsilonGreedyPolicy(
            d=d, link=link, a=p["a"], mle_config=MleConfig(ridge=p["mle_ridge"], gradient_tolerance=1e-4)
        )
    raise ValueError(f"unknown policy {name!r}")


# ---------------------------------------------------------------------------
# Traces and runs


@dataclass
class RegretTrace:
    policy: str
    repetition: int
    cumulative_regret: np.ndarray
    instantaneous_regret: np.ndarray
    chosen_arms: np.ndarray
    policy_time_ns: int
    mle_solves: int
    sgd_steps: int
    failed: bool = False
    failed_round: Optional[int] = None

    @property
    def rounds(self) -> int:
        return int(self.cumulative_regret.shape[0])

    @property
    def final_regret(self) -> float:
        return float(self.cumulative_regret[-1]) if self.rounds else 0.0


def run_once(
    env_spec: EnvSpec,
    policy_spec: PolicySpec,
    T: int,
    seed: int,
    repetition: int = 0,
) -> RegretTrace:
    """Drive one policy for T rounds; timing covers policy calls only."""
    env = build_env(env_spec, seed)
    policy = build_policy(policy_spec, env, T)
    policy.reset(policy_seed(seed, policy_spec.name))
    inst = np.zeros(T)
    cum = np.zeros(T)
    arms = np.zeros(T, dtype=int)
    elapsed = 0
    running = 0.0
    failed = False
    failed_round: Optional[int] = None
    for t in range(1, T + 1):
        contexts = env.contexts(t)
        try:
            t0 = time.perf_counter_ns()
            arm = policy.choose(contexts, t)
            elapsed += time.perf_counter_ns() - t0
            outcome = env.step(arm, contexts, t)
            t0 = time.perf_counter_ns()
            policy.observe(contexts[arm], outcome.reward)
            elapsed += time.perf_counter_ns() - t0
        except (ConvergenceError, SingularSystemError):
            failed = True
            failed_round = t
            inst = inst[: t - 1]
            cum = cum[: t - 1]
            arms = arms[: t - 1]
            break
        inst[t - 1] = outcome.regret
        running += outcome.regret
        cum[t - 1] = running
        arms[t - 1] = arm
    return RegretTrace(
        policy=policy_spec.name,
        repetition=repetition,
        cumulative_regret=cum,
        instantaneous_regret=inst,
        chosen_arms=arms,
        policy_time_ns=elapsed,
        mle_solves=policy.mle_solves,
        sgd_steps=policy.sgd_steps,
        failed=failed,
        failed_round=failed_round,
    )


@dataclass
class Aggregate:
    policy: str
    n_traces: int
    mean_cumulative: np.ndarray
    std_cumulative: np.ndarray

    @property
    def final_mean(self) -> float:
        return float(self.mean_cumulative[-1]) if len(self.mean_cumulative) else 0.0

    @property
    def final_std(self) -> float:
        return float(self.std_cumulative[-1]) if len(self.std_cumulative) else 0.0


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    traces: list
    aggregates: dict
    warnings: list


def aggregate_traces(traces: list) -> tuple[dict, list]:
    """Pointwise mean/std per policy over surviving traces.

    Failed traces are excluded and reported, never imputed.
    """
    warnings: list[str] = []
    by_policy: dict[str, list[RegretTrace]] = {}
    for trace in traces:
        if trace.failed:
            warnings.append(
                f"policy {trace.policy!r} repetition {trace.repetition} "
                f"failed at round {trace.failed_round}; excluded from aggregates"
            )
            continue
        by_policy.setdefault(trace.policy, []).append(trace)
    aggregates: dict[str, Aggregate] = {}
    for policy, group in by_policy.items():
        stacked = np.vstack([t.cumulative_regret for t in group])
        aggregates[policy] = Aggregate(
            policy=policy,
            n_traces=len(group),
            mean_cumulative=stacked.mean(axis=0),
            std_cumulative=stacked.std(axis=0),
        )
    return aggregates, warnings


def _run_once_star(args) -> RegretTrace:
    return run_once(*args)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """All (policy, repetition) runs; repetition r uses seed base_seed + r."""
    jobs = [
        (cfg.env, spec, cfg.T, cfg.base_seed + rep, rep)
        for spec in cfg.policies
        for rep in range(cfg.repetitions)
    ]
    if cfg.parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallelism) as pool:
            traces = list(pool.map(_run_once_star, jobs))
    else:
        traces = [_run_once_star(job) for job in jobs]
    aggregates, warnings = aggregate_traces(traces)
    return ExperimentResult(
        config=cfg, traces=traces, aggregates=aggregates, warnings=warnings
    )


# ---------------------------------------------------------------------------
# Grid search


@dataclass(frozen=True)
class GridScore:
    policy: str
    params: dict
    mean_final_regret: float
    n_traces: int


@dataclass
class GridResult:
    scores: list
    best: dict


def _grid_combos(name: str, base: dict, grid: GridSpec) -> list[dict]:
    rates, mults, etas = (
        grid.exploration_rates,
        grid.tau_multipliers,
        grid.etas,
    )
    if name == "sgd-ts":
        combos = []
        for rate, mult, eta in product(rates, mults, etas):
            params = dict(base)
            params.pop("tau", None)
            params.update(a1=rate, a2=rate, tau_multiplier=mult, eta=eta)
            combos.append(params)
        return combos
    if name == "ucb-glm":
        combos = []
        for rate, mult in product(rates, mults):
            params = dict(base)
            params.pop("tau", None)
            params.update(beta=rate, tau_multiplier=mult)
            combos.append(params)
        return combos
    if name == "gloc":
        return [
            {**base, "beta": rate, "eta": eta} for rate, eta in product(rates, etas)
        ]
    if name == "laplace-ts":
        return [{**base, "q0": 1.0 / eta} for eta in etas]
    if name == "epsilon-greedy":
        return [{**base, "a": rate} for rate in rates]
    return [dict(base)]


def grid_search(cfg: ExperimentConfig, grid: GridSpec) -> GridResult:
    """Exhaustive per-policy enumeration scored by mean final regret.

    Ties break deterministically toward the earlier enumeration entry.
    """
    scores: list[GridScore] = []
    best: dict[str, GridScore] = {}
    for spec in cfg.policies:
        for params in _grid_combos(spec.name, dict(spec.params), grid):
            candidate = PolicySpec(spec.name, params)
            finals = []
            for rep in range(cfg.repetitions):
                trace = run_once(
                    cfg.env, candidate, cfg.T, cfg.base_seed + rep, rep
                )
                if not trace.failed:
                    finals.append(trace.final_regret)
            score = GridScore(
                policy=spec.name,
                params=params,
                mean_final_regret=(
                    float(np.mean(finals)) if finals else math.inf
                ),
                n_traces=len(finals),
            )
            scores.append(score)
            incumbent = best.get(spec.name)
            if incumbent is None or score.mean_final_regret < incumbent.mean_final_regret:
                best[spec.name] = score
    return GridResult(scores=scores, best=best)


# ---------------------------------------------------------------------------
# Timing


@dataclass
class PolicyTiming:
    policy: str
    total_seconds: float
    mean_seconds: float
    mean_per_round_ns: float
    mle_solves: int
    sgd_steps: int


@dataclass
class TimingReport:
    policies: dict
    sgdts_ucbglm_ratio: Optional[float]


def timing_report(traces: list) -> TimingReport:
    """Per-policy wall-clock totals, per-round means, and counters."""
    if not traces:
        raise ValueError("timing_report needs at least one trace")
    by_policy: dict[str, list[RegretTrace]] = {}
    for trace in traces:
        by_policy.setdefault(trace.policy, []).append(trace)
    policies: dict[str, PolicyTiming] = {}
    for policy, group in by_policy.items():
        total_ns = sum(t.policy_time_ns for t in group)
        rounds = sum(t.rounds for t in group)
        policies[policy] = PolicyTiming(
            policy=policy,
            total_seconds=total_ns / 1e9,
            mean_seconds=total_ns / 1e9 / len(group),
            mean_per_round_ns=(total_ns / rounds) if rounds else 0.0,
            mle_solves=sum(t.mle_solves for t in group),
            sgd_steps=sum(t.sgd_steps for t in group),
        )
    ratio = None
    if "sgd-ts" in policies and "ucb-glm" in policies:
        denom = policies["ucb-glm"].total_seconds
        if denom > 0:
            ratio = policies["sgd-ts"].total_seconds / denom
    return TimingReport(policies=policies, sgdts_ucbglm_ratio=ratio)


def scaling_report(
    env_spec: EnvSpec,
    policy_specs: list,
    t_values: list,
    repetitions: int = 2,
    base_seed: int = 0,
) -> dict:
    """Mean per-round policy time at each horizon, per policy.

    Returns {policy: {T: mean_per_round_ns}}; the flat-vs-growing contrast
    between constant-work and history-refitting policies shows up here.
    """
    out: dict[str, dict[int, float]] = {spec.name: {} for spec in policy_specs}
    for T in t_values:
        for spec in policy_specs:
            total_ns = 0
            total_rounds = 0
            for rep in range(repetitions):
                trace = run_once(env_spec, spec, T, base_seed + rep, rep)
                total_ns += trace.policy_time_ns
                total_rounds += trace.rounds
            out[spec.name][T] = total_ns / total_rounds if total_rounds else 0.0
    return out


# ---------------------------------------------------------------------------
# Empirical diagnostics for the theory-mode guarantees


OPTIMISM_FLOOR = 1.0 / (4.0 * math.sqrt(math.pi * math.e))
# Pinned acceptance threshold for the optimism frequency check.
OPTIMISM_THRESHOLD = 0.0766


@dataclass(frozen=True)
class TheoryRunConfig:
    d: int = 3
    K: int = 10
    T: int = 1000
    tau: int = 40
    alpha: float = 0.045
    noise_scale: float = 0.5
    slope_floor_mle: float = 0.045
    slope_floor: float = 0.045
    mle_ridge: float = 1e-6
    mle_tolerance: float = 1e-4


@dataclass
class TheoryRunRecord:
    config: TheoryRunConfig
    schedule: TheoryExploration
    env: SyntheticGlbEnv
    contexts: np.ndarray
    chosen_x: np.ndarray
    rewards: np.ndarray
    best_x: np.ndarray
    snapshots: list


def _theory_run(seed: int, cfg: TheoryRunConfig = TheoryRunConfig()) -> TheoryRunRecord:
    """One instrumented theory-mode run recording the full observation stream."""
    env = SyntheticGlbEnv(d=cfg.d, K=cfg.K, link=logistic_link(), seed=seed)
    schedule = TheoryExploration(
        noise_scale=cfg.noise_scale,
        slope_floor_mle=cfg.slope_floor_mle,
        slope_floor=cfg.slope_floor,
        alpha=cfg.alpha,
        tau=cfg.tau,
        d=cfg.d,
        n_arms=cfg.K,
        horizon=cfg.T,
    )
    snapshots: list[dict] = []
    policy = SgdTsPolicy(
        d=cfg.d,
        link=logistic_link(),
        tau=cfg.tau,
        schedule=schedule,
        mle_config=MleConfig(ridge=cfg.mle_ridge, gradient_tolerance=cfg.mle_tolerance),
        epoch_hook=snapshots.append,
    )
    policy.reset(policy_seed(seed, policy.name))
    all_contexts = np.zeros((cfg.T, cfg.K, cfg.d))
    chosen = np.zeros((cfg.T, cfg.d))
    rewards = np.zeros(cfg.T)
    best = np.zeros((cfg.T, cfg.d))
    for t in range(1, cfg.T + 1):
        contexts = env.contexts(t)
        arm = policy.choose(contexts, t)
        outcome = env.step(arm, contexts, t)
        policy.observe(contexts[arm], outcome.reward)
        all_contexts[t - 1] = contexts
        chosen[t - 1] = contexts[arm]
        rewards[t - 1] = outcome.reward
        best[t - 1] = contexts[np.argmax(env.expected_rewards(contexts))]
    return TheoryRunRecord(
        config=cfg,
        schedule=schedule,
        env=env,
        contexts=all_contexts,
        chosen_x=chosen,
        rewards=rewards,
        best_x=best,
        snapshots=snapshots,
    )


def replay_sgd_stream(record: TheoryRunRecord, max_epochs: int):
    """Recompute the SGD recursion offline from a recorded stream.

    Yields (j, average_j, window_count) using the same primitives the policy
    uses, which lets the convergence check also cover the final window whose
    boundary round falls just past the horizon.
    """
    cfg = record.config
    link = logistic_link()
    warmup = ObservationBatch(
        record.chosen_x[: cfg.tau], record.rewards[: cfg.tau]
    )
    anchor = solve_mle(
        warmup, link, MleConfig(ridge=cfg.mle_ridge, gradient_tolerance=cfg.mle_tolerance)
    )
    ball = ProjectionBall(anchor, 2.0)
    averager = SgdAverager.start(anchor)
    results = []
    for j in range(1, max_epochs + 1):
        lo, hi = (j - 1) * cfg.tau, j * cfg.tau
        if hi > cfg.T:
            break
        window = ObservationBatch(record.chosen_x[lo:hi], record.rewards[lo:hi])
        gradient = aggregated_gradient(window, averager.iterate, link)
        averager = sgd_update(
            averager, gradient, theory_step_size(j, cfg.alpha), ball
        )
        results.append((j, averager.average.copy(), hi))
    return results


@dataclass
class CheckResult:
    name: str
    passed: bool
    stats: dict


@dataclass
class DiagnosticsReport:
    seed: int
    checks: list

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)


def sgd_convergence_check(
    seed: int,
    n_runs: int = 20,
    max_epochs: int = 25,
    min_passing: int = 19,
    cfg: TheoryRunConfig = TheoryRunConfig(),
) -> CheckResult:
    """Averaged-iterate-to-MLE distance against its high-probability bound.

    For each seeded run, checks ||avg_j - mle_j|| <= (tau/alpha) *
    sqrt((1 + log j) / j) at every window j, where mle_j is re-solved from
    the first j*tau observations of the recorded stream.
    """
    link = logistic_link()
    runs_passed = 0
    worst_margin = -math.inf
    for r in range(n_runs):
        record = _theory_run(seed + r, cfg)
        ok = True
        for j, average, used in replay_sgd_stream(record, max_epochs):
            history = ObservationBatch(
                record.chosen_x[:used], record.rewards[:used]
            )
            mle = solve_mle(
                history,
                link,
                MleConfig(ridge=cfg.mle_ridge, gradient_tolerance=cfg.mle_tolerance),
            )
            bound = (cfg.tau / cfg.alpha) * math.sqrt((1.0 + math.log(j)) / j)
            gap = float(np.linalg.norm(average - mle))
            worst_margin = max(worst_margin, gap - bound)
            if gap > bound:
                ok = False
        if ok:
            runs_passed += 1
    return CheckResult(
        name="sgd_mle_convergence",
        passed=runs_passed >= min_passing,
        stats={
            "runs_passed": float(runs_passed),
            "runs_total": float(n_runs),
            "min_passing": float(min_passing),
            "worst_margin": worst_margin,
        },
    )


def ts_concentration_check(
    seed: int,
    cfg: TheoryRunConfig = TheoryRunConfig(),
    slack_factor: float = 11.0,
) -> CheckResult:
    """Frequency of sampled-parameter deviations beyond the union-bound width.

    Counts context vectors x in each window violating
    |x @ (avg_j - sampled_j)| <= tail_radius * ||x|| * sqrt(variance(j));
    the violating fraction must stay below slack_factor / T^2.
    """
    record = _theory_run(seed, cfg)
    schedule = record.schedule
    u = schedule.tail_radius
    violations = 0
    total = 0
    for snap in record.snapshots:
        j = snap["epoch"]
        gap = snap["average"] - snap["theta_ts"]
        width = u * math.sqrt(schedule.variance(j))
        lo = j * cfg.tau
        hi = min((j + 1) * cfg.tau, cfg.T)
        ctx = record.contexts[lo:hi].reshape(-1, cfg.d)
        lhs = np.abs(ctx @ gap)
        rhs = width * np.linalg.norm(ctx, axis=1)
        violations += int(np.sum(lhs > rhs))
        total += ctx.shape[0]
    frequency = violations / total if total else 0.0
    threshold = slack_factor / float(cfg.T) ** 2
    return CheckResult(
        name="ts_concentration",
        passed=frequency <= threshold,
        stats={
            "violations": float(violations),
            "pairs": float(total),
            "frequency": frequency,
            "threshold": threshold,
        },
    )


def ts_optimism_check(
    seed: int,
    cfg: TheoryRunConfig = TheoryRunConfig(),
    draws_per_epoch: int = 64,
    min_replays: int = 1000,
    threshold: float = OPTIMISM_THRESHOLD,
) -> CheckResult:
    """Frequency with which a fresh sampled parameter overrates the best arm.

    Only windows whose recorded state certifies the concentration premises
    count: the averaged iterate must sit within the combined widths of the
    truth, and the design matrix must have grown its smallest eigenvalue
    past alpha * j / slope_floor.  On those windows the replayed frequency
    of {x_best @ sample > x_best @ truth} must clear the floor.
    """
    record = _theory_run(seed, cfg)
    schedule = record.schedule
    theta_star = record.env.theta_star
    rng = np.random.default_rng([seed, 77_001])
    hits = 0
    events = 0
    replays = 0
    epochs_certified = 0
    design = np.zeros((cfg.d, cfg.d))
    design_rounds = 0
    for snap in record.snapshots:
        j = snap["epoch"]
        while design_rounds < j * cfg.tau:
            x = record.chosen_x[design_rounds]
            design += np.outer(x, x)
            design_rounds += 1
        eigvals = np.linalg.eigvalsh(design)
        premise_design = eigvals[0] >= cfg.alpha * j / cfg.slope_floor
        gap = float(np.linalg.norm(snap["average"] - theta_star))
        certified_width = schedule.mle_width(j) / math.sqrt(
            max(eigvals[-1], 1e-12)
        ) + schedule.gap_width(j) / math.sqrt(j)
        if not (premise_design and gap <= certified_width):
            continue
        epochs_certified += 1
        lo = j * cfg.tau
        hi = min((j + 1) * cfg.tau, cfg.T)
        best = record.best_x[lo:hi]
        sigma = math.sqrt(snap["variance"])
        draws = snap["average"][None, :] + sigma * rng.standard_normal(
            (draws_per_epoch, cfg.d)
        )
        replays += draws_per_epoch
        sample_scores = best @ draws.T
        truth_scores = (best @ theta_star)[:, None]
        hits += int(np.sum(sample_scores > truth_scores))
        events += sample_scores.size
    frequency = hits / events if events else 0.0
    passed = replays >= min_replays and frequency >= threshold
    return CheckResult(
        name="ts_optimism",
        passed=passed,
        stats={
            "frequency": frequency,
            "threshold": threshold,
            "floor_constant": OPTIMISM_FLOOR,
            "replays": float(replays),
            "epochs_certified": float(epochs_certified),
        },
    )


def run_diagnostics(seed: int) -> DiagnosticsReport:
    """The three empirical checks behind the `check` subcommand."""
    return DiagnosticsReport(
        seed=seed,
        checks=[
            sgd_convergence_check(seed),
            ts_concentration_check(seed),
            ts_optimism_check(seed),
        ],
    )
