"""Link functions and aggregated losses for generalized linear reward models.

The reward model is ``E[y | x] = mu(x @ theta)`` for a strictly increasing
link ``mu`` with cumulant ``m`` satisfying ``m' = mu``.  The per-observation
negative log-likelihood ``-y * (x @ theta) + m(x @ theta)`` is convex in
``theta``; summing it over an observation window gives the aggregated loss
whose gradient and Hessian drive both the batch Newton solver and the
online updates.

All exponentials are routed through overflow-safe branches so that window
sums stay finite for logits up to |z| ~ 700.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

__all__ = [
    "GlmLink",
    "ObservationBatch",
    "logistic_link",
    "identity_link",
    "link_value",
    "link_derivative",
    "cumulant",
    "aggregated_loss",
    "aggregated_gradient",
    "aggregated_hessian",
]

ArrayLike = Union[float, np.ndarray]

NORM_SLACK = 1e-12


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _sigmoid(z: ArrayLike) -> ArrayLike:
    arr = np.asarray(z, dtype=float)
    out = _stable_sigmoid(np.atleast_1d(arr))
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def _sigmoid_derivative(z: ArrayLike) -> ArrayLike:
    # mu'(z) = mu(z) * mu(-z); evaluating both sides keeps the tiny factor
    # representable instead of computing 1 - mu(z) at saturation.
    arr = np.asarray(z, dtype=float)
    a = np.atleast_1d(arr)
    out = _stable_sigmoid(a) * _stable_sigmoid(-a)
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def _softplus(z: ArrayLike) -> ArrayLike:
    # log(1 + e^z) = max(z, 0) + log(1 + e^{-|z|})
    arr = np.asarray(z, dtype=float)
    out = np.maximum(arr, 0.0) + np.log1p(np.exp(-np.abs(arr)))
    return float(out) if arr.ndim == 0 else out


def _identity(z: ArrayLike) -> ArrayLike:
    arr = np.asarray(z, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


def _ones_like(z: ArrayLike) -> ArrayLike:
    arr = np.asarray(z, dtype=float)
    return 1.0 if arr.ndim == 0 else np.ones_like(arr)


def _half_square(z: ArrayLike) -> ArrayLike:
    arr = np.asarray(z, dtype=float)
    out = 0.5 * arr * arr
    return float(out) if arr.ndim == 0 else out


@dataclass(frozen=True)
class GlmLink:
    """A strictly increasing link with its cumulant and derivative bound.

    New links plug in as a (value, derivative, cumulant, bound) quadruple;
    the derivative must satisfy ``0 <= value_derivative <= lipschitz_bound``
    everywhere and the cumulant must integrate the value.
    """

    kind: str
    lipschitz_bound: float
    value_fn: Callable[[ArrayLike], ArrayLike]
    derivative_fn: Callable[[ArrayLike], ArrayLike]
    cumulant_fn: Callable[[ArrayLike], ArrayLike]


def logistic_link() -> GlmLink:
    """Sigmoid link: mu(z) = 1 / (1 + e^{-z}), |mu'| <= 1/4."""
    return GlmLink("logistic", 0.25, _sigmoid, _sigmoid_derivative, _softplus)


def identity_link() -> GlmLink:
    """Linear link: mu(z) = z, cumulant z^2 / 2, |mu'| = 1."""
    return GlmLink("identity", 1.0, _identity, _ones_like, _half_square)


def _check_finite(z: ArrayLike) -> None:
    if not np.all(np.isfinite(z)):
        raise ValueError("link argument must be finite")


def link_value(link: GlmLink, z: ArrayLike) -> ArrayLike:
    """Evaluate mu(z)."""
    _check_finite(z)
    return link.value_fn(z)


def link_derivative(link: GlmLink, z: ArrayLike) -> ArrayLike:
    """Evaluate mu'(z); bounded by ``link.lipschitz_bound``."""
    _check_finite(z)
    return link.derivative_fn(z)


def cumulant(link: GlmLink, z: ArrayLike) -> ArrayLike:
    """Evaluate the cumulant m(z) with m' = mu."""
    _check_finite(z)
    return link.cumulant_fn(z)


class ObservationBatch:
    """A window of (feature, reward) pairs with unit-norm-bounded features.

    Rewards are expected in [0, 1] by the bandit environments; the batch
    itself only enforces the structural invariants (matching lengths,
    finite values, feature norms <= 1).
    """

    __slots__ = ("features", "rewards")

    def __init__(self, features: np.ndarray, rewards: np.ndarray) -> None:
        features = np.asarray(features, dtype=float)
        rewards = np.asarray(rewards, dtype=float)
        if features.ndim != 2:
            raise ValueError(f"features must be 2-d, got shape {features.shape}")
        if rewards.ndim != 1:
            raise ValueError(f"rewards must be 1-d, got shape {rewards.shape}")
        if features.shape[0] != rewards.shape[0]:
            raise ValueError(
                f"features and rewards disagree in length: "
                f"{features.shape[0]} != {rewards.shape[0]}"
            )
        if features.size and not np.all(np.isfinite(features)):
            raise ValueError("features must be finite")
        if rewards.size and not np.all(np.isfinite(rewards)):
            raise ValueError("rewards must be finite")
        if features.size:
            norms = np.linalg.norm(features, axis=1)
            worst = float(norms.max())
            if worst > 1.0 + NORM_SLACK:
                raise ValueError(f"feature norm {worst} exceeds 1")
        self.features = features
        self.rewards = rewards

    def __len__(self) -> int:
        return self.features.shape[0]


def _check_theta(batch: ObservationBatch, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1:
        raise ValueError(f"theta must be 1-d, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta must be finite")
    if len(batch) and batch.features.shape[1] != theta.shape[0]:
        raise ValueError(
            f"dimension mismatch: features are "
            f"{batch.features.shape[1]}-d but theta is {theta.shape[0]}-d"
        )
    return theta


def aggregated_loss(batch: ObservationBatch, theta: np.ndarray, link: GlmLink) -> float:
    """Sum of -y * (x@theta) + m(x@theta) over the batch."""
    theta = _check_theta(batch, theta)
    if not len(batch):
        return 0.0
    z = batch.features @ theta
    return float(np.sum(-batch.rewards * z + link.cumulant_fn(z)))


def aggregated_gradient(
    batch: ObservationBatch, theta: np.ndarray, link: GlmLink
) -> np.ndarray:
    """Gradient of the aggregated loss: sum of (mu(x@theta) - y) x."""
    theta = _check_theta(batch, theta)
    if not len(batch):
        return np.zeros_like(theta)
    z = batch.features @ theta
    return batch.features.T @ (link.value_fn(z) - batch.rewards)


def aggregated_hessian(
    batch: ObservationBatch, theta: np.ndarray, link: GlmLink
) -> np.ndarray:
    """Hessian of the aggregated loss: sum of mu'(x@theta) x x^T (symmetric PSD)."""
    theta = _check_theta(batch, theta)
    d = theta.shape[0]
    if not len(batch):
        return np.zeros((d, d))
    z = batch.features @ theta
    w = link.derivative_fn(z)
    h = (batch.features * w[:, None]).T @ batch.features
    return 0.5 * (h + h.T)
