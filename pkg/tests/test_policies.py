"""Policy behavior tests: selection rules, schedules, and the five learners."""

import math

import numpy as np
import pytest

from glbandit.estimators import MleConfig
from glbandit.glm import identity_link, link_value, logistic_link
from glbandit.policies import (
    EpsilonGreedyPolicy,
    GlocPolicy,
    LaplaceTsPolicy,
    PracticalExploration,
    SgdTsPolicy,
    TheoryExploration,
    UcbGlmPolicy,
    UniformPolicy,
    policy_seed,
    select_arm_by_score,
    ts_sample,
)

LOGISTIC = logistic_link()
IDENTITY = identity_link()


class TestSelectArm:
    def test_total_tie_takes_smallest_index(self):
        contexts = np.array([[0.5, 0.1], [0.2, 0.2], [0.3, 0.3]])
        assert select_arm_by_score(np.zeros(2), contexts) == 0

    def test_hand_inner_products(self):
        contexts = np.array([[0.1, 0.9], [0.8, 0.1], [0.5, 0.5]])
        assert select_arm_by_score(np.array([1.0, 0.0]), contexts) == 1

    def test_matches_linked_score_argmax(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            contexts = rng.uniform(-0.5, 0.5, size=(8, 3))
            theta = rng.normal(size=3)
            raw = select_arm_by_score(theta, contexts)
            linked = int(np.argmax(link_value(LOGISTIC, contexts @ theta)))
            assert raw == linked

    def test_scale_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            contexts = rng.uniform(-0.5, 0.5, size=(6, 4))
            theta = rng.normal(size=4)
            c = float(rng.uniform(0.01, 100.0))
            assert select_arm_by_score(theta, contexts) == select_arm_by_score(
                c * theta, contexts
            )

    def test_empty_contexts_rejected(self):
        with pytest.raises(ValueError):
            select_arm_by_score(np.zeros(2), np.zeros((0, 2)))


class TestTsSample:
    def test_zero_variance_returns_mean(self):
        mean = np.array([1.0, -2.0])
        out = ts_sample(mean, 0.0, np.random.default_rng(0))
        assert np.array_equal(out, mean)

    def test_negative_variance_rejected(self):
        with pytest.raises(ValueError):
            ts_sample(np.zeros(2), -1e-9, np.random.default_rng(0))

    def test_moments(self):
        rng = np.random.default_rng(123)
        mean = np.array([1.0, 1.0])
        draws = np.vstack([ts_sample(mean, 4.0, rng) for _ in range(100_000)])
        assert np.max(np.abs(draws.mean(axis=0) - mean)) < 0.05
        assert np.max(np.abs(draws.var(axis=0) - 4.0)) < 0.15

    def test_deterministic_under_seed(self):
        a = ts_sample(np.zeros(3), 2.0, np.random.default_rng(42))
        b = ts_sample(np.zeros(3), 2.0, np.random.default_rng(42))
        assert np.array_equal(a, b)


class TestSchedules:
    def test_practical_variance_value(self):
        sched = PracticalExploration(a1=1.0, a2=1.0, eta=1.0)
        assert sched.variance(1) == pytest.approx(4.0)

    def test_theory_mle_width_value(self):
        sched = TheoryExploration(
            noise_scale=0.5,
            slope_floor_mle=0.25,
            slope_floor=0.25,
            alpha=1.0,
            tau=10,
            d=2,
            n_arms=5,
            horizon=1000,
        )
        # 2 * sqrt(log(11) + 2 log 1000), evaluated independently
        expected = 2.0 * math.sqrt(math.log(11.0) + 2.0 * math.log(1000.0))
        assert sched.mle_width(1) == pytest.approx(expected, abs=1e-9)
        assert sched.mle_width(1) == pytest.approx(8.0532, abs=1e-3)

    def test_theory_tail_radius(self):
        sched = TheoryExploration(
            noise_scale=0.5,
            slope_floor_mle=0.045,
            slope_floor=0.045,
            alpha=0.045,
            tau=40,
            d=3,
            n_arms=10,
            horizon=1000,
        )
        assert sched.tail_radius == pytest.approx(
            math.sqrt(2.0 * math.log(10 * 40 * 1000.0**2))
        )

    @pytest.mark.parametrize(
        "sched",
        [
            PracticalExploration(a1=0.3, a2=0.7, eta=1.0),
            TheoryExploration(
                noise_scale=0.5,
                slope_floor_mle=0.045,
                slope_floor=0.045,
                alpha=0.045,
                tau=40,
                d=3,
                n_arms=10,
                horizon=1000,
            ),
        ],
    )
    def test_variance_positive_and_nonincreasing(self, sched):
        values = [sched.variance(j) for j in range(1, 60)]
        assert all(v > 0 for v in values)
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


def _uniform_contexts(rng, K, d):
    bound = 1.0 / math.sqrt(d)
    return rng.uniform(-bound, bound, size=(K, d))


def _drive(policy, T, K, d, theta_star, seed=0):
    """Roll a policy against a fixed logistic world; returns chosen arms."""
    rng = np.random.default_rng(seed)
    arms = []
    for t in range(1, T + 1):
        contexts = _uniform_contexts(rng, K, d)
        arm = policy.choose(contexts, t)
        p = float(link_value(LOGISTIC, contexts[arm] @ theta_star))
        reward = float(rng.uniform() < p)
        policy.observe(contexts[arm], reward)
        arms.append(arm)
    return arms


def make_sgdts(tau=5, d=2, a=0.5, eta=1.0, hook=None):
    return SgdTsPolicy(
        d=d,
        link=LOGISTIC,
        tau=tau,
        schedule=PracticalExploration(a1=a, a2=a, eta=eta),
        mle_config=MleConfig(ridge=0.5, gradient_tolerance=1e-6),
        epoch_hook=hook,
    )


class TestSgdTsPolicy:
    def test_epoch_trace_with_tau_five(self):
        snaps = []
        policy = make_sgdts(tau=5, hook=snaps.append)
        policy.reset(0)
        theta_star = np.array([0.5, -0.3])
        rng = np.random.default_rng(0)
        for t in range(1, 7):
            contexts = _uniform_contexts(rng, 4, 2)
            if t == 6:
                # rounds 1..5 were uniform draws with no estimation work
                assert policy.mle_solves == 0 and policy.sgd_steps == 0
            policy.choose(contexts, t)
            p = float(link_value(LOGISTIC, contexts[0] @ theta_star))
            policy.observe(contexts[0], float(rng.uniform() < p))
        # round 6 has (t-1) % 5 == 0: anchor MLE plus the first window step
        assert policy.mle_solves == 1
        assert policy.sgd_steps == 1
        assert snaps[0]["epoch"] == 1 and snaps[0]["round"] == 6

    def test_sampled_parameter_changes_only_at_window_boundaries(self):
        policy = make_sgdts(tau=5)
        policy.reset(3)
        theta_star = np.array([0.4, 0.2])
        rng = np.random.default_rng(9)
        last = None
        for t in range(1, 41):
            contexts = _uniform_contexts(rng, 3, 2)
            policy.choose(contexts, t)
            if t > 5:
                if (t - 1) % 5 == 0:
                    assert last is None or not np.array_equal(policy.theta_ts, last)
                elif last is not None:
                    assert np.array_equal(policy.theta_ts, last)
                last = policy.theta_ts.copy()
                assert policy.epoch == (t - 1) // 5
            p = float(link_value(LOGISTIC, contexts[0] @ theta_star))
            policy.observe(contexts[0], float(rng.uniform() < p))

    def test_warmup_is_uniform(self):
        policy = make_sgdts(tau=600)
        policy.reset(11)
        rng = np.random.default_rng(2)
        contexts = _uniform_contexts(rng, 5, 2)
        counts = np.zeros(5)
        for t in range(1, 601):
            counts[policy.choose(contexts, t)] += 1
        freqs = counts / 600
        assert np.max(np.abs(freqs - 0.2)) < 0.075

    def test_epoch_discipline_counts(self):
        T, tau = 203, 10
        policy = make_sgdts(tau=tau)
        policy.reset(5)
        _drive(policy, T, 4, 2, np.array([0.3, 0.1]))
        assert policy.mle_solves == 1
        assert policy.sgd_steps == (T - 1) // tau

    def test_zero_exploration_rate_plays_the_average(self):
        snaps = []
        policy = make_sgdts(tau=5, a=0.0, hook=snaps.append)
        policy.reset(1)
        _drive(policy, 26, 4, 2, np.array([0.5, 0.0]))
        for snap in snaps:
            assert np.array_equal(snap["theta_ts"], snap["average"])


class TestUcbGlmPolicy:
    def make(self, beta=1.0, reg=1.0, tau=5, d=2):
        return UcbGlmPolicy(
            d=d,
            link=LOGISTIC,
            tau=tau,
            beta=beta,
            reg=reg,
            mle_config=MleConfig(ridge=0.1, gradient_tolerance=1e-6),
        )

    def test_unit_design_width(self):
        policy = self.make(reg=1.0)
        policy.reset(0)
        x = np.array([0.6, 0.8])
        width = math.sqrt(float(x @ policy.v_inv @ x))
        assert width == pytest.approx(1.0)

    def test_zero_beta_is_greedy_on_mle(self):
        rng = np.random.default_rng(4)
        greedy = self.make(beta=0.0)
        greedy.reset(7)
        arms = _drive(greedy, 40, 5, 2, np.array([0.5, -0.2]), seed=8)
        # replay: after warm-up, choices must equal the pure MLE argmax
        from glbandit.estimators import solve_mle
        from glbandit.glm import ObservationBatch

        check = self.make(beta=0.0)
        check.reset(7)
        rng = np.random.default_rng(8)
        for t in range(1, 41):
            contexts = _uniform_contexts(rng, 5, 2)
            arm = check.choose(contexts, t)
            if t > 5:
                theta = solve_mle(
                    ObservationBatch(
                        np.array(check._xs[: t - 1]), np.array(check._ys[: t - 1])
                    ),
                    LOGISTIC,
                    MleConfig(ridge=0.1, gradient_tolerance=1e-6),
                )
                assert arm == select_arm_by_score(theta, contexts)
            p = float(link_value(LOGISTIC, contexts[arm] @ np.array([0.5, -0.2])))
            policy_reward = float(rng.uniform() < p)
            check.observe(contexts[arm], policy_reward)

    def test_rank_one_updates_match_direct_inverse(self):
        rng = np.random.default_rng(6)
        policy = self.make(reg=1.0, d=3)
        policy.reset(0)
        v = np.eye(3)
        for _ in range(5):
            x = rng.uniform(-0.5, 0.5, size=3)
            policy.observe(x, 0.0)
            v += np.outer(x, x)
        assert np.max(np.abs(v @ policy.v_inv - np.eye(3))) < 1e-8

    def test_mle_count_is_one_per_post_warmup_round(self):
        policy = self.make(tau=5)
        policy.reset(0)
        _drive(policy, 30, 4, 2, np.array([0.3, 0.3]))
        assert policy.mle_solves == 25


class TestGlocPolicy:
    def test_initial_scores_reduce_to_width(self):
        policy = GlocPolicy(d=2, link=LOGISTIC, beta=2.0, lambda_init=1.0)
        policy.reset(0)
        contexts = np.array([[0.3, 0.0], [0.0, 0.9], [0.5, 0.5]])
        # theta = 0, A = I: score is beta * ||x||
        assert policy.choose(contexts, 1) == int(
            np.argmax(np.linalg.norm(contexts, axis=1))
        )

    def test_single_update_hand_values(self):
        policy = GlocPolicy(d=2, link=LOGISTIC, lambda_init=1.0)
        policy.reset(0)
        policy.observe(np.array([1.0, 0.0]), 1.0)
        assert np.allclose(policy.a_mat, [[2.0, 0.0], [0.0, 1.0]])
        x = np.array([1.0, 0.0])
        width = math.sqrt(float(x @ policy.a_inv @ x))
        assert width == pytest.approx(1.0 / math.sqrt(2.0))

    def test_design_matrix_stays_positive_definite(self):
        rng = np.random.default_rng(3)
        policy = GlocPolicy(d=3, link=LOGISTIC, lambda_init=0.5)
        policy.reset(0)
        for _ in range(1000):
            x = rng.uniform(-0.5, 0.5, size=3)
            policy.observe(x, float(rng.uniform() < 0.5))
        assert np.linalg.eigvalsh(policy.a_mat).min() >= 0.5 - 1e-9

    def test_parameter_stays_in_radius(self):
        rng = np.random.default_rng(5)
        policy = GlocPolicy(d=2, link=LOGISTIC, eta=5.0, radius=1.5)
        policy.reset(0)
        for _ in range(200):
            x = rng.uniform(-0.7, 0.7, size=2)
            policy.observe(x, float(rng.uniform() < 0.3))
            assert np.linalg.norm(policy.theta) <= 1.5 + 1e-12


def scalar_grid_minimum(q, m, y, lo=-3.0, hi=3.0, n=600_001):
    """Brute-force minimizer of q/2 (w - m)^2 + softplus(w) - y w."""
    w = np.linspace(lo, hi, n)
    loss = 0.5 * q * (w - m) ** 2 + np.logaddexp(0.0, w) - y * w
    return float(w[np.argmin(loss)])


class TestLaplaceTsPolicy:
    def test_rejects_non_logistic_link(self):
        with pytest.raises(ValueError, match="logistic"):
            LaplaceTsPolicy(d=2, link=IDENTITY)

    def test_concentrated_posterior_is_greedy(self):
        policy = LaplaceTsPolicy(d=2, link=LOGISTIC, q0=1e12)
        policy.reset(0)
        policy.m = np.array([1.0, -1.0])
        contexts = np.array([[0.9, 0.0], [0.0, 0.9], [0.5, 0.5]])
        assert policy.choose(contexts, 1) == select_arm_by_score(policy.m, contexts)

    def test_inner_solve_matches_scalar_grid_oracle(self):
        policy = LaplaceTsPolicy(d=2, link=LOGISTIC, q0=1.0)
        policy.reset(0)
        policy.observe(np.array([1.0, 0.0]), 1.0)
        oracle = scalar_grid_minimum(q=1.0, m=0.0, y=1.0)
        assert policy.m[0] == pytest.approx(oracle, abs=1e-4)
        assert policy.m[1] == pytest.approx(0.0, abs=1e-12)
        p = float(link_value(LOGISTIC, policy.m[0]))
        assert policy.q[0] == pytest.approx(1.0 + p * (1.0 - p), abs=1e-9)
        assert policy.q[0] > 1.0
        assert policy.q[1] == pytest.approx(1.0)

    def test_repeated_positive_observations_move_mode_up(self):
        policy = LaplaceTsPolicy(d=2, link=LOGISTIC, q0=1.0)
        policy.reset(0)
        x = np.array([1.0, 0.0])
        previous = 0.0
        for _ in range(5):
            q_before = policy.q[0]
            m_before = policy.m[0]
            policy.observe(x, 1.0)
            oracle = scalar_grid_minimum(q=q_before, m=m_before, y=1.0)
            assert policy.m[0] == pytest.approx(oracle, abs=1e-4)
            assert policy.m[0] >= previous
            previous = policy.m[0]

    def test_precision_nondecreasing_over_random_stream(self):
        rng = np.random.default_rng(1)
        policy = LaplaceTsPolicy(d=3, link=LOGISTIC)
        policy.reset(0)
        for _ in range(50):
            q_before = policy.q.copy()
            x = rng.uniform(-0.5, 0.5, size=3)
            policy.observe(x, float(rng.uniform() < 0.6))
            assert np.all(policy.q >= q_before)
            assert np.all(policy.q > 0)


class TestEpsilonGreedyPolicy:
    def test_zero_rate_never_explores(self):
        policy = EpsilonGreedyPolicy(d=2, link=LOGISTIC, a=0.0)
        assert policy.explore_probability(1) == 0.0

    def test_large_rate_clamps_to_one(self):
        policy = EpsilonGreedyPolicy(d=2, link=LOGISTIC, a=10.0)
        assert policy.explore_probability(1) == 1.0

    def test_exploration_frequency(self):
        policy = EpsilonGreedyPolicy(d=2, link=LOGISTIC, a=1.0)
        policy.reset(99)
        p = policy.explore_probability(400)
        assert p == pytest.approx(0.05)
        hits = sum(policy.rng.uniform() < p for _ in range(100_000))
        assert abs(hits / 100_000 - 0.05) < 0.005

    def test_greedy_with_no_history_takes_first_arm(self):
        policy = EpsilonGreedyPolicy(d=2, link=LOGISTIC, a=0.0)
        policy.reset(0)
        contexts = np.array([[0.5, 0.0], [0.0, 0.5]])
        assert policy.choose(contexts, 1) == 0
        assert policy.mle_solves == 0

    def test_mle_refresh_counted_per_greedy_round(self):
        policy = EpsilonGreedyPolicy(
            d=2,
            link=LOGISTIC,
            a=0.0,
            mle_config=MleConfig(ridge=0.5, gradient_tolerance=1e-6),
        )
        policy.reset(0)
        _drive(policy, 20, 3, 2, np.array([0.4, 0.1]))
        assert policy.mle_solves == 19  # all rounds greedy except the empty first


ALL_POLICIES = [
    lambda: UniformPolicy(),
    lambda: make_sgdts(tau=5),
    lambda: UcbGlmPolicy(
        d=2,
        link=LOGISTIC,
        tau=5,
        mle_config=MleConfig(ridge=0.5, gradient_tolerance=1e-6),
    ),
    lambda: GlocPolicy(d=2, link=LOGISTIC),
    lambda: LaplaceTsPolicy(d=2, link=LOGISTIC),
    lambda: EpsilonGreedyPolicy(
        d=2,
        link=LOGISTIC,
        a=1.0,
        mle_config=MleConfig(ridge=0.5, gradient_tolerance=1e-6),
    ),
]


class TestDeterminism:
    @pytest.mark.parametrize("factory", ALL_POLICIES)
    def test_identical_seed_gives_identical_arms(self, factory):
        theta_star = np.array([0.5, -0.4])
        first = factory()
        first.reset(policy_seed(17, first.name))
        arms_a = _drive(first, 40, 4, 2, theta_star, seed=21)
        second = factory()
        second.reset(policy_seed(17, second.name))
        arms_b = _drive(second, 40, 4, 2, theta_star, seed=21)
        assert arms_a == arms_b

    def test_seed_keying_is_name_stable(self):
        assert policy_seed(3, "sgd-ts") == policy_seed(3, "sgd-ts")
        assert policy_seed(3, "sgd-ts") != policy_seed(3, "ucb-glm")
