"""Batch maximum-likelihood warm-up and projected online-SGD primitives.

Two estimation routes share the same aggregated loss: a damped Newton solve
for the one-shot warm-up anchor, and single projected gradient steps on the
window losses thereafter.  The running average of the SGD iterates is what
the sampling policies treat as their parameter estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .glm import GlmLink, ObservationBatch, aggregated_loss

__all__ = [
    "MleConfig",
    "ProjectionBall",
    "SgdAverager",
    "ConvergenceError",
    "SingularSystemError",
    "solve_mle",
    "project_to_ball",
    "sgd_update",
    "theory_step_size",
    "practical_step_size",
]


class ConvergenceError(RuntimeError):
    """Newton solve exhausted its iteration budget.

    Carries the gradient norm at the final iterate in ``gradient_norm``.
    """

    def __init__(self, message: str, gradient_norm: float) -> None:
        super().__init__(message)
        self.gradient_norm = gradient_norm


class SingularSystemError(RuntimeError):
    """The Newton system is singular; a positive ridge makes it solvable."""


@dataclass(frozen=True)
class MleConfig:
    max_iterations: int = 100
    gradient_tolerance: float = 1e-8
    ridge: float = 1e-6
    step_damping: float = 1.0

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.gradient_tolerance <= 0:
            raise ValueError("gradient_tolerance must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")
        if not (0.0 < self.step_damping <= 1.0):
            raise ValueError("step_damping must be in (0, 1]")


@dataclass(frozen=True)
class ProjectionBall:
    center: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        center = np.asarray(self.center, dtype=float)
        if not np.all(np.isfinite(center)):
            raise ValueError("ball center must be finite")
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", center)


@dataclass(frozen=True)
class SgdAverager:
    """Current SGD iterate plus the running mean of all iterates so far."""

    iterate: np.ndarray
    average: np.ndarray
    count: int = 0

    @classmethod
    def start(cls, theta0: np.ndarray) -> "SgdAverager":
        theta0 = np.asarray(theta0, dtype=float)
        return cls(iterate=theta0.copy(), average=np.zeros_like(theta0), count=0)


_MIN_STEP_SCALE = 1e-12


def solve_mle(
    observations: ObservationBatch,
    link: GlmLink,
    cfg: MleConfig = MleConfig(),
    theta0: np.ndarray | None = None,
    objective_history: list | None = None,
) -> np.ndarray:
    """Damped-Newton solve of the ridge-regularized maximum-likelihood problem.

    Minimizes ``aggregated_loss(obs, theta) + ridge/2 * ||theta||^2``; at the
    solution the score equation ``sum (y - mu(x@theta)) x = ridge * theta``
    holds up to ``cfg.gradient_tolerance``.  The line search halves the step
    until the objective stops increasing, so the recorded objective values
    are non-increasing.
    """
    if not len(observations):
        raise ValueError("solve_mle needs at least one observation")
    x = observations.features
    d = x.shape[1]
    theta = (
        np.zeros(d) if theta0 is None else np.array(theta0, dtype=float, copy=True)
    )
    eye = np.eye(d)

    def objective(t: np.ndarray) -> float:
        return aggregated_loss(observations, t, link) + 0.5 * cfg.ridge * float(t @ t)

    f_cur = objective(theta)
    if objective_history is not None:
        objective_history.append(f_cur)
    grad_norm = math.inf
    for _ in range(cfg.max_iterations):
        z = x @ theta
        grad = x.T @ (link.value_fn(z) - observations.rewards) + cfg.ridge * theta
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= cfg.gradient_tolerance:
            return theta
        weights = link.derivative_fn(z)
        hess = (x * weights[:, None]).T @ x + cfg.ridge * eye
        try:
            direction = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            if cfg.ridge == 0:
                raise SingularSystemError(
                    "Newton system is singular; rerun with ridge > 0"
                ) from exc
            raise
        scale = cfg.step_damping
        stalled = False
        while True:
            candidate = theta - scale * direction
            f_new = objective(candidate)
            if f_new <= f_cur:
                break
            scale *= 0.5
            if scale < _MIN_STEP_SCALE:
                # No step length along the Newton direction decreases the
                # objective any further: float precision is exhausted.
                stalled = True
                break
        if stalled:
            break
        theta = candidate
        f_cur = f_new
        if objective_history is not None:
            objective_history.append(f_cur)
    z = x @ theta
    grad = x.T @ (link.value_fn(z) - observations.rewards) + cfg.ridge * theta
    grad_norm = float(np.linalg.norm(grad))
    if grad_norm <= cfg.gradient_tolerance:
        return theta
    raise ConvergenceError(
        f"MLE did not converge in {cfg.max_iterations} iterations "
        f"(gradient norm {grad_norm:.3e})",
        gradient_norm=grad_norm,
    )


def project_to_ball(theta: np.ndarray, ball: ProjectionBall) -> np.ndarray:
    """Euclidean projection onto the ball; identity on interior points."""
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta must be finite")
    offset = theta - ball.center
    dist = float(np.linalg.norm(offset))
    if dist <= ball.radius:
        return theta.copy()
    return ball.center + (ball.radius / dist) * offset


def sgd_update(
    state: SgdAverager,
    gradient: np.ndarray,
    step_size: float,
    ball: ProjectionBall,
) -> SgdAverager:
    """One projected gradient step plus the incremental average update.

    New iterate = project(iterate - step_size * gradient); the running
    average absorbs the new iterate as ``((j-1)*avg + new) / j``.
    """
    gradient = np.asarray(gradient, dtype=float)
    if not np.all(np.isfinite(gradient)):
        raise ValueError("gradient must be finite")
    if step_size <= 0:
        raise ValueError("step_size must be positive")
    new_iterate = project_to_ball(state.iterate - step_size * gradient, ball)
    j = state.count + 1
    new_average = ((j - 1) * state.average + new_iterate) / j
    return SgdAverager(iterate=new_iterate, average=new_average, count=j)


def theory_step_size(j: int, alpha: float) -> float:
    """Step 1 / (alpha * j) for the strongly-convex schedule."""
    if j < 1:
        raise ValueError("j must be >= 1")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return 1.0 / (alpha * j)


def practical_step_size(j: int, eta: float) -> float:
    """Step eta / j for the tuned schedule."""
    if j < 1:
        raise ValueError("j must be >= 1")
    if eta <= 0:
        raise ValueError("eta must be positive")
    return eta / j
