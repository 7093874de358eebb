"""Sequential decision policies behind a shared choose/observe contract.

Every policy sees K feature vectors per round, picks one arm, and later
receives only the chosen arm's reward.  The main policy pairs one projected
SGD step per observation window with a Thompson-sampling draw whose variance
shrinks over windows; the four baselines trade per-round cost against
estimate quality in different ways (full MLE refreshes, online Newton,
diagonal Laplace posterior, decayed epsilon exploration).
"""

from __future__ import annotations

import math
import zlib
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .estimators import (
    MleConfig,
    ProjectionBall,
    SgdAverager,
    practical_step_size,
    sgd_update,
    solve_mle,
    theory_step_size,
)
from .glm import GlmLink, ObservationBatch, aggregated_gradient

__all__ = [
    "Policy",
    "TheoryExploration",
    "PracticalExploration",
    "SgdTsPolicy",
    "UcbGlmPolicy",
    "GlocPolicy",
    "LaplaceTsPolicy",
    "EpsilonGreedyPolicy",
    "UniformPolicy",
    "OraclePolicy",
    "select_arm_by_score",
    "ts_sample",
    "policy_seed",
]

Seed = Union[int, Sequence[int]]


def policy_seed(run_seed: int, name: str) -> list[int]:
    """Derive an independent, name-keyed RNG seed for one policy.

    Keying by a stable hash of the policy name (rather than its position in
    a config) means adding or removing a policy never perturbs another's
    draws.
    """
    return [int(run_seed), zlib.crc32(name.encode("utf-8"))]


def select_arm_by_score(theta: np.ndarray, contexts: np.ndarray) -> int:
    """Index of the highest-scoring arm, smallest index on ties.

    Because every link is strictly increasing, the argmax of the raw scores
    ``x @ theta`` equals the argmax of the linked means.
    """
    contexts = np.asarray(contexts, dtype=float)
    if contexts.ndim != 2 or contexts.shape[0] == 0:
        raise ValueError("contexts must be a nonempty (K, d) array")
    return int(np.argmax(contexts @ np.asarray(theta, dtype=float)))


def ts_sample(
    mean: np.ndarray, variance: float, rng: np.random.Generator
) -> np.ndarray:
    """Draw from N(mean, variance * I); exact mean when variance is zero."""
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    mean = np.asarray(mean, dtype=float)
    if variance == 0.0:
        return mean.copy()
    return mean + math.sqrt(variance) * rng.standard_normal(mean.shape[0])


class TheoryExploration:
    """Sampling-variance schedule built from concentration widths.

    ``mle_width(j)`` bounds the MLE estimation error after j windows,
    ``gap_width(j)`` bounds the distance between the averaged SGD iterate
    and that MLE, and ``variance(j)`` combines the two into the isotropic
    Gaussian variance used for the parameter draw.  ``tail_radius`` is the
    union-bound radius for checking the draw's concentration per window.
    """

    def __init__(
        self,
        noise_scale: float,
        slope_floor_mle: float,
        slope_floor: float,
        alpha: float,
        tau: int,
        d: int,
        n_arms: int,
        horizon: int,
    ) -> None:
        if min(noise_scale, slope_floor_mle, slope_floor, alpha) <= 0:
            raise ValueError("schedule constants must be positive")
        if min(tau, d, n_arms, horizon) < 1:
            raise ValueError("tau, d, n_arms and horizon must be >= 1")
        self.noise_scale = noise_scale
        self.slope_floor_mle = slope_floor_mle
        self.slope_floor = slope_floor
        self.alpha = alpha
        self.tau = tau
        self.d = d
        self.n_arms = n_arms
        self.horizon = horizon
        self.tail_radius = math.sqrt(
            2.0 * math.log(n_arms * tau * float(horizon) ** 2)
        )

    def mle_width(self, j: int) -> float:
        return (self.noise_scale / self.slope_floor_mle) * math.sqrt(
            0.5 * self.d * math.log(1.0 + 2.0 * j * self.tau / self.d)
            + 2.0 * math.log(self.horizon)
        )

    def gap_width(self, j: int) -> float:
        return (self.tau / self.alpha) * math.sqrt(1.0 + math.log(j))

    def variance(self, j: int) -> float:
        if j < 1:
            raise ValueError("j must be >= 1")
        g1 = self.mle_width(j)
        g2 = self.gap_width(j)
        return (
            2.0 * self.slope_floor * g1 * g1 / (self.alpha * j)
            + 2.0 * g2 * g2 / j
        )

    def step_size(self, j: int) -> float:
        return theory_step_size(j, self.alpha)


class PracticalExploration:
    """Tuned variance schedule (2*a1^2 + 2*a2^2) / j with step eta / j."""

    def __init__(self, a1: float, a2: float, eta: float) -> None:
        if a1 < 0 or a2 < 0:
            raise ValueError("exploration rates must be nonnegative")
        if eta <= 0:
            raise ValueError("eta must be positive")
        self.a1 = a1
        self.a2 = a2
        self.eta = eta

    def variance(self, j: int) -> float:
        if j < 1:
            raise ValueError("j must be >= 1")
        return (2.0 * self.a1 * self.a1 + 2.0 * self.a2 * self.a2) / j

    def step_size(self, j: int) -> float:
        return practical_step_size(j, self.eta)


class Policy:
    """Base contract: reset(seed), choose(contexts, t) -> arm, observe(x, y).

    ``observe`` receives only the chosen arm's feature and realized reward
    (partial feedback).  ``mle_solves`` and ``sgd_steps`` count the heavy
    estimation events for the timing reports.
    """

    name: str = "policy"

    def __init__(self) -> None:
        self.rng = np.random.default_rng()
        self.mle_solves = 0
        self.sgd_steps = 0

    def reset(self, seed: Seed) -> None:
        self.rng = np.random.default_rng(seed)
        self.mle_solves = 0
        self.sgd_steps = 0

    def choose(self, contexts: np.ndarray, t: int) -> int:
        raise NotImplementedError

    def observe(self, x: np.ndarray, y: float) -> None:
        raise NotImplementedError


class UniformPolicy(Policy):
    """Pulls a uniformly random arm every round; the no-learning floor."""

    name = "uniform"

    def choose(self, contexts: np.ndarray, t: int) -> int:
        return int(self.rng.integers(0, contexts.shape[0]))

    def observe(self, x: np.ndarray, y: float) -> None:
        pass


class OraclePolicy(Policy):
    """Diagnostic policy that cheats: argmax of the hidden expected rewards.

    Only usable against environments that expose their truth; its regret is
    zero by construction, which pins down the harness's regret accounting.
    """

    name = "oracle"

    def __init__(self, env) -> None:
        super().__init__()
        self.env = env

    def choose(self, contexts: np.ndarray, t: int) -> int:
        return int(np.argmax(self.env.expected_rewards(contexts)))

    def observe(self, x: np.ndarray, y: float) -> None:
        pass


class SgdTsPolicy(Policy):
    """One projected SGD step per window plus a Thompson draw.

    Rounds 1..tau pull uniformly at random and fill the warm-up buffer.  At
    round tau+1 the anchor estimate is solved once from the warm-up data and
    the projection ball is centered on it.  From then on, each time a fresh
    window of tau observations completes (rounds tau+1, 2*tau+1, ...), the
    policy takes one projected gradient step on the window loss, refreshes
    the running average of iterates, and draws a sampled parameter from an
    isotropic Gaussian around the average.  All rounds in between score arms
    with the same sampled parameter, so per-round work stays constant in t.
    """

    name = "sgd-ts"

    def __init__(
        self,
        d: int,
        link: GlmLink,
        tau: int,
        schedule: Union[TheoryExploration, PracticalExploration],
        ball_radius: float = 2.0,
        mle_config: MleConfig = MleConfig(ridge=0.1, gradient_tolerance=1e-4),
        epoch_hook: Optional[Callable[[dict], None]] = None,
    ) -> None:
        super().__init__()
        if tau < 1:
            raise ValueError("tau must be >= 1")
        self.d = d
        self.link = link
        self.tau = tau
        self.schedule = schedule
        self.ball_radius = ball_radius
        self.mle_config = mle_config
        self.epoch_hook = epoch_hook
        self._clear()

    def _clear(self) -> None:
        self.anchor: Optional[np.ndarray] = None
        self.ball: Optional[ProjectionBall] = None
        self.averager: Optional[SgdAverager] = None
        self.theta_ts: Optional[np.ndarray] = None
        self.epoch = 0
        self._window_x: list[np.ndarray] = []
        self._window_y: list[float] = []

    def reset(self, seed: Seed) -> None:
        super().reset(seed)
        self._clear()

    def _window_batch(self) -> ObservationBatch:
        return ObservationBatch(
            np.asarray(self._window_x, dtype=float).reshape(-1, self.d),
            np.asarray(self._window_y, dtype=float),
        )

    def _advance_epoch(self, t: int) -> None:
        window = self._window_batch()
        if len(window) != self.tau:
            raise RuntimeError(
                f"window holds {len(window)} observations at round {t}, "
                f"expected {self.tau}"
            )
        if self.anchor is None:
            self.anchor = solve_mle(window, self.link, self.mle_config)
            self.mle_solves += 1
            self.ball = ProjectionBall(self.anchor, self.ball_radius)
            self.averager = SgdAverager.start(self.anchor)
        j = (t - 1) // self.tau
        gradient = aggregated_gradient(window, self.averager.iterate, self.link)
        self.averager = sgd_update(
            self.averager, gradient, self.schedule.step_size(j), self.ball
        )
        self.sgd_steps += 1
        self.epoch = j
        variance = self.schedule.variance(j)
        self.theta_ts = ts_sample(self.averager.average, variance, self.rng)
        self._window_x.clear()
        self._window_y.clear()
        if self.epoch_hook is not None:
            self.epoch_hook(
                {
                    "epoch": j,
                    "round": t,
                    "iterate": self.averager.iterate.copy(),
                    "average": self.averager.average.copy(),
                    "variance": variance,
                    "theta_ts": self.theta_ts.copy(),
                }
            )

    def choose(self, contexts: np.ndarray, t: int) -> int:
        if t <= self.tau:
            return int(self.rng.integers(0, contexts.shape[0]))
        if (t - 1) % self.tau == 0:
            self._advance_epoch(t)
        return select_arm_by_score(self.theta_ts, contexts)

    def observe(self, x: np.ndarray, y: float) -> None:
        self._window_x.append(np.asarray(x, dtype=float))
        self._window_y.append(float(y))


class UcbGlmPolicy(Policy):
    """Optimism baseline: per-round MLE refresh plus an inverse-design width.

    After tau uniform warm-up rounds, every round re-solves the MLE on the
    full history and scores arms as ``x @ theta_hat + beta * ||x||_{V^-1}``.
    V accumulates chosen-feature outer products on top of ``reg * I`` and
    its inverse is maintained by rank-one (Sherman-Morrison) updates.
    """

    name = "ucb-glm"

    def __init__(
        self,
        d: int,
        link: GlmLink,
        tau: int,
        beta: float = 1.0,
        reg: float = 1.0,
        mle_config: MleConfig = MleConfig(ridge=0.1, gradient_tolerance=1e-4),
    ) -> None:
        super().__init__()
        if reg <= 0:
            raise ValueError("reg must be positive")
        self.d = d
        self.link = link
        self.tau = tau
        self.beta = beta
        self.reg = reg
        self.mle_config = mle_config
        self._clear()

    def _clear(self) -> None:
        self.v_inv = np.eye(self.d) / self.reg
        self._xs: list[np.ndarray] = []
        self._ys: list[float] = []

    def reset(self, seed: Seed) -> None:
        super().reset(seed)
        self._clear()

    def _history(self) -> ObservationBatch:
        return ObservationBatch(
            np.asarray(self._xs, dtype=float).reshape(-1, self.d),
            np.asarray(self._ys, dtype=float),
        )

    def choose(self, contexts: np.ndarray, t: int) -> int:
        if t <= self.tau:
            return int(self.rng.integers(0, contexts.shape[0]))
        theta_hat = solve_mle(self._history(), self.link, self.mle_config)
        self.mle_solves += 1
        contexts = np.asarray(contexts, dtype=float)
        widths = np.einsum("kd,de,ke->k", contexts, self.v_inv, contexts)
        scores = contexts @ theta_hat + self.beta * np.sqrt(
            np.maximum(widths, 0.0)
        )
        return int(np.argmax(scores))

    def observe(self, x: np.ndarray, y: float) -> None:
        x = np.asarray(x, dtype=float)
        self._xs.append(x)
        self._ys.append(float(y))
        vx = self.v_inv @ x
        self.v_inv -= np.outer(vx, vx) / (1.0 + float(x @ vx))


class GlocPolicy(Policy):
    """Online-Newton baseline with an ellipsoidal optimism width.

    Keeps a single online parameter and a growing design matrix A.  Each
    observation applies one damped Newton-style step
    ``theta <- proj_{||.|| <= radius}(theta - eta * A^-1 grad)`` using the
    newest example's loss gradient; arms are scored as
    ``x @ theta + beta * ||x||_{A^-1}``.
    """

    name = "gloc"

    def __init__(
        self,
        d: int,
        link: GlmLink,
        beta: float = 1.0,
        eta: float = 1.0,
        lambda_init: float = 1.0,
        radius: float = 2.0,
    ) -> None:
        super().__init__()
        if lambda_init <= 0:
            raise ValueError("lambda_init must be positive")
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.d = d
        self.link = link
        self.beta = beta
        self.eta = eta
        self.lambda_init = lambda_init
        self.radius = radius
        self._clear()

    def _clear(self) -> None:
        self.a_mat = self.lambda_init * np.eye(self.d)
        self.a_inv = np.eye(self.d) / self.lambda_init
        self.theta = np.zeros(self.d)

    def reset(self, seed: Seed) -> None:
        super().reset(seed)
        self._clear()

    def choose(self, contexts: np.ndarray, t: int) -> int:
        contexts = np.asarray(contexts, dtype=float)
        widths = np.einsum("kd,de,ke->k", contexts, self.a_inv, contexts)
        scores = contexts @ self.theta + self.beta * np.sqrt(
            np.maximum(widths, 0.0)
        )
        return int(np.argmax(scores))

    def observe(self, x: np.ndarray, y: float) -> None:
        x = np.asarray(x, dtype=float)
        z = float(x @ self.theta)
        grad = (float(self.link.value_fn(z)) - float(y)) * x
        self.a_mat += np.outer(x, x)
        ax = self.a_inv @ x
        self.a_inv -= np.outer(ax, ax) / (1.0 + float(x @ ax))
        step = self.theta - self.eta * (self.a_inv @ grad)
        norm = float(np.linalg.norm(step))
        if norm > self.radius:
            step *= self.radius / norm
        self.theta = step


class LaplaceTsPolicy(Policy):
    """Diagonal Laplace posterior for the logistic case.

    Maintains per-coordinate precisions q and a mode m.  Each draw samples
    w_i ~ N(m_i, 1/q_i) independently and plays the argmax.  On observing
    (x, y), the mode moves to the minimizer of the one-observation problem
    ``1/2 sum q_i (w_i - m_i)^2 + logistic loss`` (a few damped Newton
    steps, the Hessian being diagonal plus rank one), after which the
    precisions absorb the local curvature ``q_i += x_i^2 p (1 - p)``.
    """

    name = "laplace-ts"

    _MAX_INNER = 20
    _INNER_TOL = 1e-8

    def __init__(self, d: int, link: GlmLink, q0: float = 1.0) -> None:
        super().__init__()
        if link.kind != "logistic":
            raise ValueError("the Laplace posterior supports the logistic link only")
        if q0 <= 0:
            raise ValueError("q0 must be positive")
        self.d = d
        self.link = link
        self.q0 = q0
        self._clear()

    def _clear(self) -> None:
        self.q = np.full(self.d, self.q0, dtype=float)
        self.m = np.zeros(self.d)

    def reset(self, seed: Seed) -> None:
        super().reset(seed)
        self._clear()

    def choose(self, contexts: np.ndarray, t: int) -> int:
        w = self.m + self.rng.standard_normal(self.d) / np.sqrt(self.q)
        return select_arm_by_score(w, np.asarray(contexts, dtype=float))

    def _inner_objective(self, w: np.ndarray, x: np.ndarray, y: float) -> float:
        diff = w - self.m
        z = float(x @ w)
        return 0.5 * float(self.q @ (diff * diff)) - y * z + float(
            self.link.cumulant_fn(z)
        )

    def _inner_solve(self, x: np.ndarray, y: float) -> np.ndarray:
        w = self.m.copy()
        f_cur = self._inner_objective(w, x, y)
        for _ in range(self._MAX_INNER):
            z = float(x @ w)
            grad = self.q * (w - self.m) + (float(self.link.value_fn(z)) - y) * x
            if float(np.linalg.norm(grad)) <= self._INNER_TOL:
                break
            # Hessian = diag(q) + mu'(z) x x^T; invert via Sherman-Morrison.
            slope = float(self.link.derivative_fn(z))
            dg = grad / self.q
            dx = x / self.q
            direction = dg - dx * (slope * float(x @ dg)) / (
                1.0 + slope * float(x @ dx)
            )
            scale = 1.0
            while True:
                candidate = w - scale * direction
                f_new = self._inner_objective(candidate, x, y)
                if f_new <= f_cur:
                    break
                scale *= 0.5
                if scale < 1e-12:
                    candidate = w
                    f_new = f_cur
                    break
            w = candidate
            f_cur = f_new
        return w

    def observe(self, x: np.ndarray, y: float) -> None:
        x = np.asarray(x, dtype=float)
        self.m = self._inner_solve(x, float(y))
        p = float(self.link.value_fn(float(x @ self.m)))
        self.q += x * x * p * (1.0 - p)


class EpsilonGreedyPolicy(Policy):
    """Explore with probability a / sqrt(t), otherwise a greedy MLE refresh."""

    name = "epsilon-greedy"

    def __init__(
        self,
        d: int,
        link: GlmLink,
        a: float = 1.0,
        mle_config: MleConfig = MleConfig(ridge=0.1, gradient_tolerance=1e-4),
    ) -> None:
        super().__init__()
        if a < 0:
            raise ValueError("a must be nonnegative")
        self.d = d
        self.link = link
        self.a = a
        self.mle_config = mle_config
        self._clear()

    def _clear(self) -> None:
        self._xs: list[np.ndarray] = []
        self._ys: list[float] = []

    def reset(self, seed: Seed) -> None:
        super().reset(seed)
        self._clear()

    def explore_probability(self, t: int) -> float:
        if t < 1:
            raise ValueError("t must be >= 1")
        return min(1.0, self.a / math.sqrt(t))

    def choose(self, contexts: np.ndarray, t: int) -> int:
        contexts = np.asarray(contexts, dtype=float)
        if self.rng.uniform() < self.explore_probability(t):
            return int(self.rng.integers(0, contexts.shape[0]))
        if not self._xs:
            theta_hat = np.zeros(self.d)
        else:
            history = ObservationBatch(
                np.asarray(self._xs, dtype=float).reshape(-1, self.d),
                np.asarray(self._ys, dtype=float),
            )
            theta_hat = solve_mle(history, self.link, self.mle_config)
            self.mle_solves += 1
        return select_arm_by_score(theta_hat, contexts)

    def observe(self, x: np.ndarray, y: float) -> None:
        self._xs.append(np.asarray(x, dtype=float))
        self._ys.append(float(y))
