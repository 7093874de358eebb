"""Reward-generating worlds with hidden truth for regret accounting.

Two environments back the benchmarks: a synthetic world where features and
the hidden parameter are uniform draws and rewards follow the link model,
and a clustered-dataset world that turns a labeled numeric table into arms
by k-means partitioning (each arm's mean reward is its cluster's positive-
label proportion).  Expected rewards stay hidden from the policies; only
the harness reads them to account regret.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .glm import GlmLink

__all__ = [
    "RoundOutcome",
    "SyntheticGlbEnv",
    "ClusteredDatasetEnv",
    "cluster_dataset",
    "load_table",
    "kmeans",
]

# Sub-stream namespaces so every draw is keyed by (seed, purpose[, round]).
_NS_THETA = 0
_NS_CONTEXT = 1
_NS_REWARD = 2
_NS_RESAMPLE = 3

_IDENTITY_NOISE_DEFAULT = 0.1


@dataclass(frozen=True)
class RoundOutcome:
    """What one pull produced, plus the hidden truth needed for regret."""

    arm: int
    reward: float
    expected_chosen: float
    expected_best: float

    @property
    def regret(self) -> float:
        return self.expected_best - self.expected_chosen


class SyntheticGlbEnv:
    """K arms of fresh uniform features each round; rewards follow the link.

    Coordinates of both the contexts and the hidden parameter are i.i.d.
    uniform on [-1/sqrt(d), 1/sqrt(d)], so every vector has norm <= 1.
    Logistic rewards are Bernoulli draws with the linked mean; identity
    rewards map the raw score affinely into [0, 1] and add clipped Gaussian
    noise.  Contexts and reward draws are keyed by (seed, round), making a
    full run reproducible from the seed alone.
    """

    kind = "synthetic"

    def __init__(
        self,
        d: int,
        K: int,
        link: GlmLink,
        seed: int,
        noise_sigma: float = _IDENTITY_NOISE_DEFAULT,
    ) -> None:
        if d < 1 or K < 1:
            raise ValueError("d and K must be positive")
        if noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        self.d = d
        self.K = K
        self.link = link
        self.seed = int(seed)
        self.noise_sigma = noise_sigma
        bound = 1.0 / math.sqrt(d)
        rng = np.random.default_rng([self.seed, _NS_THETA])
        self.theta_star = rng.uniform(-bound, bound, size=d)

    def contexts(self, t: int) -> np.ndarray:
        """K fresh feature vectors for round t, deterministic in (seed, t)."""
        bound = 1.0 / math.sqrt(self.d)
        rng = np.random.default_rng([self.seed, _NS_CONTEXT, int(t)])
        return rng.uniform(-bound, bound, size=(self.K, self.d))

    def expected_rewards(self, contexts: np.ndarray) -> np.ndarray:
        scores = np.asarray(contexts, dtype=float) @ self.theta_star
        if self.link.kind == "identity":
            return 0.5 * (scores + 1.0)
        return np.asarray(self.link.value_fn(scores))

    def reward_sample(self, x: np.ndarray, rng: np.random.Generator) -> float:
        """Realize one reward for feature x using the supplied generator."""
        mean = float(self.expected_rewards(np.asarray(x, dtype=float)[None, :])[0])
        if self.link.kind == "identity":
            noisy = mean + self.noise_sigma * rng.standard_normal()
            return float(np.clip(noisy, 0.0, 1.0))
        return float(rng.uniform() < mean)

    def step(self, arm: int, contexts: np.ndarray, t: int) -> RoundOutcome:
        contexts = np.asarray(contexts, dtype=float)
        if not (0 <= arm < contexts.shape[0]):
            raise ValueError(f"arm {arm} out of range for {contexts.shape[0]} arms")
        means = self.expected_rewards(contexts)
        rng = np.random.default_rng([self.seed, _NS_REWARD, int(t)])
        reward = self.reward_sample(contexts[arm], rng)
        return RoundOutcome(
            arm=int(arm),
            reward=reward,
            expected_chosen=float(means[arm]),
            expected_best=float(means.max()),
        )

    def sigma0_sq_estimate(self, rounds: int = 200, seed: int = 0) -> float:
        """Monte Carlo lower-curvature estimate of the context second moment.

        Estimates the smallest eigenvalue of E[(1/K) sum_a x_a x_a^T]; must
        be strictly positive for the diversity-style assumptions to bite.
        """
        rng = np.random.default_rng([self.seed, _NS_CONTEXT, 10_000_019, seed])
        bound = 1.0 / math.sqrt(self.d)
        total = np.zeros((self.d, self.d))
        for _ in range(rounds):
            ctx = rng.uniform(-bound, bound, size=(self.K, self.d))
            total += ctx.T @ ctx / self.K
        return float(np.linalg.eigvalsh(total / rounds)[0])

    def lambda_f_estimate(
        self, n_directions: int = 50, rounds: int = 200, seed: int = 0
    ) -> float:
        """Monte Carlo estimate of the argmax-arm second-moment floor.

        For random directions theta, estimates the smallest eigenvalue of
        E[x_theta x_theta^T] where x_theta is the round's argmax arm under
        theta, and returns the minimum over directions.
        """
        rng = np.random.default_rng([self.seed, _NS_CONTEXT, 10_000_079, seed])
        bound = 1.0 / math.sqrt(self.d)
        worst = math.inf
        for _ in range(n_directions):
            theta = rng.standard_normal(self.d)
            theta /= np.linalg.norm(theta)
            total = np.zeros((self.d, self.d))
            for _ in range(rounds):
                ctx = rng.uniform(-bound, bound, size=(self.K, self.d))
                best = ctx[np.argmax(ctx @ theta)]
                total += np.outer(best, best)
            worst = min(worst, float(np.linalg.eigvalsh(total / rounds)[0]))
        return worst


def load_table(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a headerless CSV of numeric features with a final {0,1} label.

    Malformed rows (wrong width, non-numeric cells, non-binary label) raise
    with the offending 1-based row number.
    """
    features: list[list[float]] = []
    labels: list[float] = []
    width = None
    with open(path, newline="") as handle:
        for i, row in enumerate(csv.reader(handle), start=1):
            if not row:
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise ValueError(f"row {i}: need at least one feature and a label")
            elif len(row) != width:
                raise ValueError(
                    f"row {i}: expected {width} columns, found {len(row)}"
                )
            try:
                values = [float(cell) for cell in row]
            except ValueError as exc:
                raise ValueError(f"row {i}: non-numeric cell ({exc})") from None
            label = values[-1]
            if label not in (0.0, 1.0):
                raise ValueError(f"row {i}: label must be 0 or 1, found {label}")
            features.append(values[:-1])
            labels.append(label)
    if not features:
        raise ValueError("table is empty")
    return np.asarray(features, dtype=float), np.asarray(labels, dtype=float)


def _is_binary_column(col: np.ndarray) -> bool:
    return bool(np.all((col == 0.0) | (col == 1.0)))


def standardize_features(features: np.ndarray) -> np.ndarray:
    """Center/scale non-binary columns, then rescale rows to max norm 1.

    Binary 0/1 columns pass through untouched; constant columns become zero.
    """
    out = np.array(features, dtype=float, copy=True)
    for j in range(out.shape[1]):
        col = out[:, j]
        if _is_binary_column(col):
            continue
        std = col.std()
        out[:, j] = (col - col.mean()) / std if std > 0 else 0.0
    max_norm = float(np.linalg.norm(out, axis=1).max())
    if max_norm > 0:
        out /= max_norm
    return out


def kmeans(
    points: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iter: int = 100,
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded k-means++ followed by capped Lloyd iterations.

    Returns (centers, assignments).  Raises if any cluster ends up empty;
    the caller decides how to re-seed.
    """
    n = points.shape[0]
    if k > n:
        raise ValueError(f"cannot form {k} clusters from {n} points")
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(0, n)]
    sqd = np.sum((points - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = float(sqd.sum())
        if total <= 0:
            # All remaining mass sits on chosen centers; duplicates ahead.
            raise ValueError("degenerate k-means++ seeding (duplicate points)")
        centers[c] = points[rng.choice(n, p=sqd / total)]
        sqd = np.minimum(sqd, np.sum((points - centers[c]) ** 2, axis=1))
    assignments = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        dists = (
            np.sum(points * points, axis=1)[:, None]
            - 2.0 * points @ centers.T
            + np.sum(centers * centers, axis=1)[None, :]
        )
        new_assignments = np.argmin(dists, axis=1)
        for c in range(k):
            members = points[new_assignments == c]
            if members.shape[0] == 0:
                raise ValueError(f"cluster {c} became empty")
            centers[c] = members.mean(axis=0)
        if np.array_equal(new_assignments, assignments):
            assignments = new_assignments
            break
        assignments = new_assignments
    return centers, assignments


class ClusteredDatasetEnv:
    """Arms are k-means clusters of a labeled table.

    Each arm's hidden mean reward is the positive-label proportion of its
    cluster; realized rewards are Bernoulli draws from it.  Scenario
    ``centroid`` serves each cluster's centroid every round (static
    contexts); scenario ``resample`` serves one uniformly drawn member per
    cluster per round (dynamic contexts).
    """

    kind = "clustered"

    def __init__(
        self,
        centers: np.ndarray,
        assignments: np.ndarray,
        features: np.ndarray,
        arm_rewards: np.ndarray,
        scenario: str,
        seed: int,
    ) -> None:
        if scenario not in ("centroid", "resample"):
            raise ValueError(f"unknown scenario {scenario!r}")
        self.centers = centers
        self.assignments = assignments
        self.features = features
        self.arm_rewards = arm_rewards
        self.scenario = scenario
        self.seed = int(seed)
        self.K = centers.shape[0]
        self.d = centers.shape[1]
        self._members = [
            np.flatnonzero(assignments == c) for c in range(self.K)
        ]

    def contexts(self, t: int) -> np.ndarray:
        if self.scenario == "centroid":
            return self.centers.copy()
        rng = np.random.default_rng([self.seed, _NS_RESAMPLE, int(t)])
        picks = [members[rng.integers(0, len(members))] for members in self._members]
        return self.features[picks]

    def expected_rewards(self, contexts: np.ndarray) -> np.ndarray:
        return self.arm_rewards.copy()

    def step(self, arm: int, contexts: np.ndarray, t: int) -> RoundOutcome:
        if not (0 <= arm < self.K):
            raise ValueError(f"arm {arm} out of range for {self.K} arms")
        rng = np.random.default_rng([self.seed, _NS_REWARD, int(t)])
        mean = float(self.arm_rewards[arm])
        reward = float(rng.uniform() < mean)
        return RoundOutcome(
            arm=int(arm),
            reward=reward,
            expected_chosen=mean,
            expected_best=float(self.arm_rewards.max()),
        )


def cluster_dataset(
    features: np.ndarray,
    labels: np.ndarray,
    K: int,
    seed: int,
    scenario: str = "centroid",
    max_iter: int = 100,
    reseed_attempts: int = 5,
) -> ClusteredDatasetEnv:
    """Partition a labeled table into K arms.

    Features are standardized and rescaled to max norm 1 before clustering.
    An empty cluster triggers a fresh seeded attempt, up to
    ``reseed_attempts`` times.
    """
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if features.shape[0] < K:
        raise ValueError(f"table has {features.shape[0]} rows, fewer than K={K}")
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise ValueError("labels must be binary {0, 1}")
    transformed = standardize_features(features)
    last_error: Exception | None = None
    for attempt in range(reseed_attempts):
        rng = np.random.default_rng([int(seed), attempt])
        try:
            centers, assignments = kmeans(transformed, K, rng, max_iter=max_iter)
        except ValueError as exc:
            last_error = exc
            continue
        arm_rewards = np.array(
            [labels[assignments == c].mean() for c in range(K)]
        )
        return ClusteredDatasetEnv(
            centers=centers,
            assignments=assignments,
            features=transformed,
            arm_rewards=arm_rewards,
            scenario=scenario,
            seed=seed,
        )
    raise ValueError(
        f"clustering failed after {reseed_attempts} seeded attempts: {last_error}"
    )
