"""Link function and aggregated-loss tests, checked against independent oracles."""

import math

import numpy as np
import pytest

from glbandit.glm import (
    ObservationBatch,
    aggregated_gradient,
    aggregated_hessian,
    aggregated_loss,
    cumulant,
    identity_link,
    link_derivative,
    link_value,
    logistic_link,
)

LOGISTIC = logistic_link()
IDENTITY = identity_link()


class TestLinkValue:
    def test_logistic_at_zero(self):
        assert link_value(LOGISTIC, 0.0) == pytest.approx(0.5)

    def test_identity_passthrough(self):
        assert link_value(IDENTITY, 0.3) == pytest.approx(0.3)

    def test_logistic_closed_form(self):
        # 1 / (1 + e^{-ln 3}) = 1 / (1 + 1/3) = 3/4
        assert link_value(LOGISTIC, math.log(3.0)) == pytest.approx(0.75, abs=1e-12)

    def test_overflow_safe_extremes(self):
        assert link_value(LOGISTIC, 700.0) == pytest.approx(1.0)
        assert link_value(LOGISTIC, -700.0) == pytest.approx(0.0, abs=1e-300)
        assert np.isfinite(link_value(LOGISTIC, np.array([-700.0, 700.0]))).all()

    def test_rejects_non_finite(self):
        for bad in (math.nan, math.inf, -math.inf):
            with pytest.raises(ValueError):
                link_value(LOGISTIC, bad)


class TestLinkDerivative:
    def test_identity_constant(self):
        assert link_derivative(IDENTITY, 7.0) == 1.0

    def test_logistic_matches_finite_difference_at_zero(self):
        step = 1e-5
        fd = (link_value(LOGISTIC, step) - link_value(LOGISTIC, -step)) / (2 * step)
        value = link_derivative(LOGISTIC, 0.0)
        assert value == pytest.approx(fd, abs=1e-8)
        assert value == pytest.approx(0.25, abs=1e-10)

    def test_logistic_saturation(self):
        value = link_derivative(LOGISTIC, 50.0)
        assert 0.0 <= value <= 1e-20

    def test_bounded_by_lipschitz_constant(self):
        grid = np.linspace(-20.0, 20.0, 4001)
        for link in (LOGISTIC, IDENTITY):
            values = np.asarray(link_derivative(link, grid))
            assert values.min() >= 0.0
            assert values.max() <= link.lipschitz_bound + 1e-12

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            link_derivative(IDENTITY, math.nan)


class TestCumulant:
    def test_identity_half_square(self):
        assert cumulant(IDENTITY, 2.0) == pytest.approx(2.0)

    def test_logistic_at_zero(self):
        assert cumulant(LOGISTIC, 0.0) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_logistic_negative_tail(self):
        # log(1 + e^{-40}) ~ e^{-40} ~ 4.25e-18: positive but tiny.
        value = cumulant(LOGISTIC, -40.0)
        assert 0.0 < value <= 1e-15

    def test_derivative_of_cumulant_is_link(self):
        step = 1e-6
        for link in (LOGISTIC, IDENTITY):
            for z in np.linspace(-10.0, 10.0, 41):
                fd = (cumulant(link, z + step) - cumulant(link, z - step)) / (2 * step)
                assert fd == pytest.approx(link_value(link, z), abs=1e-6)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            cumulant(LOGISTIC, math.inf)


class TestLinkInvariants:
    def test_strictly_increasing(self):
        rng = np.random.default_rng(0)
        for link in (LOGISTIC, IDENTITY):
            z = np.sort(rng.uniform(-10, 10, size=200))
            z = z[np.diff(z, prepend=z[0] - 1.0) >= 1e-6]
            values = np.asarray(link_value(link, z))
            assert np.all(np.diff(values) > 0)


class TestObservationBatch:
    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            ObservationBatch(np.zeros((2, 3)), np.zeros(3))

    def test_norm_bound_enforced(self):
        with pytest.raises(ValueError, match="norm"):
            ObservationBatch(np.array([[1.0, 1.0]]), np.array([0.5]))

    def test_norm_slack_tolerated(self):
        x = np.array([[1.0 + 5e-13, 0.0]])
        assert len(ObservationBatch(x, np.array([0.0]))) == 1

    def test_empty_batch(self):
        batch = ObservationBatch(np.zeros((0, 4)), np.zeros(0))
        assert len(batch) == 0


def random_batch(rng, d, n):
    x = rng.uniform(-1, 1, size=(n, d))
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    x = x / np.maximum(norms, 1.0)
    y = rng.uniform(0, 1, size=n)
    return ObservationBatch(x, y)


class TestAggregatedLoss:
    def test_empty_batch_is_zero(self):
        batch = ObservationBatch(np.zeros((0, 2)), np.zeros(0))
        assert aggregated_loss(batch, np.array([3.0, -1.0]), LOGISTIC) == 0.0

    def test_identity_hand_value(self):
        # -0 * 2 + 2^2 / 2 = 2
        batch = ObservationBatch(np.array([[1.0, 0.0]]), np.array([0.0]))
        assert aggregated_loss(batch, np.array([2.0, 0.0]), IDENTITY) == pytest.approx(2.0)

    def test_logistic_hand_value(self):
        # -1 * 0 + m(0) = log 2
        batch = ObservationBatch(np.array([[1.0, 0.0]]), np.array([1.0]))
        assert aggregated_loss(batch, np.zeros(2), LOGISTIC) == pytest.approx(
            math.log(2.0)
        )

    def test_dimension_mismatch(self):
        batch = ObservationBatch(np.array([[1.0, 0.0]]), np.array([1.0]))
        with pytest.raises(ValueError, match="mismatch"):
            aggregated_loss(batch, np.zeros(3), LOGISTIC)

    def test_convex_along_random_segments(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            d = int(rng.integers(1, 6))
            batch = random_batch(rng, d, int(rng.integers(1, 12)))
            link = LOGISTIC if rng.uniform() < 0.5 else IDENTITY
            a = rng.normal(size=d)
            b = rng.normal(size=d)
            mid = 0.5 * (a + b)
            lhs = aggregated_loss(batch, mid, link)
            rhs = 0.5 * (
                aggregated_loss(batch, a, link) + aggregated_loss(batch, b, link)
            )
            assert lhs <= rhs + 1e-10


class TestAggregatedGradient:
    def test_zero_at_generating_parameter(self):
        rng = np.random.default_rng(3)
        theta = np.array([0.3, -0.2, 0.1])
        x = rng.uniform(-0.5, 0.5, size=(6, 3))
        y = np.asarray(link_value(LOGISTIC, x @ theta))
        batch = ObservationBatch(x, y)
        grad = aggregated_gradient(batch, theta, LOGISTIC)
        assert np.allclose(grad, 0.0, atol=1e-12)

    def test_identity_hand_value(self):
        batch = ObservationBatch(
            np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([1.0, 0.0])
        )
        grad = aggregated_gradient(batch, np.zeros(2), IDENTITY)
        assert np.allclose(grad, [-1.0, 0.0])

    def test_matches_finite_difference(self):
        rng = np.random.default_rng(11)
        step = 1e-6
        for _ in range(100):
            d = int(rng.integers(1, 9))
            batch = random_batch(rng, d, int(rng.integers(1, 21)))
            link = LOGISTIC if rng.uniform() < 0.5 else IDENTITY
            theta = rng.normal(scale=0.5, size=d)
            grad = aggregated_gradient(batch, theta, link)
            fd = np.zeros(d)
            for i in range(d):
                e = np.zeros(d)
                e[i] = step
                fd[i] = (
                    aggregated_loss(batch, theta + e, link)
                    - aggregated_loss(batch, theta - e, link)
                ) / (2 * step)
            assert np.max(np.abs(fd - grad)) < 1e-5


class TestAggregatedHessian:
    def test_identity_is_gram_matrix(self):
        rng = np.random.default_rng(5)
        batch = random_batch(rng, 3, 8)
        hess = aggregated_hessian(batch, rng.normal(size=3), IDENTITY)
        gram = batch.features.T @ batch.features
        assert np.allclose(hess, gram, atol=1e-12)

    def test_logistic_hand_value(self):
        batch = ObservationBatch(np.array([[1.0, 0.0]]), np.array([1.0]))
        hess = aggregated_hessian(batch, np.zeros(2), LOGISTIC)
        assert np.allclose(hess, [[0.25, 0.0], [0.0, 0.0]])

    def test_matches_finite_difference_of_gradient(self):
        rng = np.random.default_rng(13)
        step = 1e-6
        for _ in range(20):
            d = int(rng.integers(1, 6))
            batch = random_batch(rng, d, int(rng.integers(1, 15)))
            theta = rng.normal(scale=0.5, size=d)
            hess = aggregated_hessian(batch, theta, LOGISTIC)
            fd = np.zeros((d, d))
            for i in range(d):
                e = np.zeros(d)
                e[i] = step
                fd[:, i] = (
                    aggregated_gradient(batch, theta + e, LOGISTIC)
                    - aggregated_gradient(batch, theta - e, LOGISTIC)
                ) / (2 * step)
            assert np.max(np.abs(fd - hess)) < 1e-4

    def test_symmetric_positive_semidefinite(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            d = int(rng.integers(1, 7))
            batch = random_batch(rng, d, int(rng.integers(1, 20)))
            hess = aggregated_hessian(batch, rng.normal(size=d), LOGISTIC)
            assert np.allclose(hess, hess.T)
            assert np.linalg.eigvalsh(hess).min() >= -1e-10

    def test_strong_convexity_probe(self):
        # Logistic windows of >= 10 ball-uniform features should be strictly
        # positive definite essentially always.
        rng = np.random.default_rng(23)
        d, tau = 3, 10
        positive = 0
        trials = 1000
        for _ in range(trials):
            direction = rng.normal(size=(tau, d))
            direction /= np.linalg.norm(direction, axis=1, keepdims=True)
            radius = rng.uniform(0, 1, size=(tau, 1)) ** (1.0 / d)
            x = direction * radius
            theta = rng.normal(size=d)
            norm = np.linalg.norm(theta)
            if norm > 3.0:
                theta *= 3.0 / norm
            hess = aggregated_hessian(
                ObservationBatch(x, np.zeros(tau)), theta, LOGISTIC
            )
            if np.linalg.eigvalsh(hess).min() > 0:
                positive += 1
        assert positive >= 0.99 * trials
