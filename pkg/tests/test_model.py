import numpy as np
import pytest

from hybandit.model import (
    ContextRound,
    HybridParams,
    embed,
    flatten,
    instantaneous_regret,
    mean_reward,
    mean_rewards,
    unflatten,
)

from oracles import brute_force_best_arm, dense_embed


def random_params(rng, d1, d2, n_arms, S=1.0):
    theta = rng.standard_normal(d1)
    theta *= S * rng.random() / max(1.0, np.linalg.norm(theta))
    betas = rng.standard_normal((n_arms, d2))
    betas *= (S * rng.random((n_arms, 1))) / np.maximum(
        1.0, np.linalg.norm(betas, axis=1, keepdims=True)
    )
    return HybridParams(theta, betas, S=S)


def random_round(rng, d1, d2, n_arms):
    xs = rng.standard_normal((n_arms, d1))
    xs /= np.maximum(1.0, np.linalg.norm(xs, axis=1, keepdims=True))
    zs = rng.standard_normal((n_arms, d2))
    zs /= np.maximum(1.0, np.linalg.norm(zs, axis=1, keepdims=True))
    return ContextRound(xs, zs)


class TestEmbed:
    def test_second_arm_layout(self):
        u = embed(1, np.array([1.0, 2.0]), np.array([3.0]), n_arms=2)
        assert np.array_equal(u.dense(2), np.array([1.0, 2.0, 0.0, 3.0]))

    def test_zero_features(self):
        u = embed(0, np.zeros(2), np.zeros(1), n_arms=2)
        assert not np.any(u.dense(2))

    def test_preserves_mean_reward(self, rng):
        d1, d2, n_arms = 4, 3, 5
        params = random_params(rng, d1, d2, n_arms)
        phi = flatten(params).phi
        for _ in range(20):
            i = int(rng.integers(n_arms))
            x = rng.standard_normal(d1) / 3
            z = rng.standard_normal(d2) / 3
            direct = float(x @ params.theta + z @ params.betas[i])
            embedded = float(embed(i, x, z, n_arms).dense(n_arms) @ phi)
            assert embedded == pytest.approx(direct, abs=1e-12)

    def test_matches_dense_oracle(self, rng):
        x, z = rng.standard_normal(3), rng.standard_normal(2)
        u = embed(2, x, z, n_arms=4)
        assert np.array_equal(u.dense(4), dense_embed(2, x, z, 4))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            embed(2, np.zeros(2), np.zeros(1), n_arms=2)


class TestFlatten:
    def test_concatenation_order(self):
        p = HybridParams(np.array([1.0]), np.array([[2.0], [3.0]]), S=3.0)
        assert np.array_equal(flatten(p).phi, np.array([1.0, 2.0, 3.0]))

    def test_all_zeros(self):
        p = HybridParams(np.zeros(2), np.zeros((3, 2)))
        assert not np.any(flatten(p).phi)

    def test_round_trip(self, rng):
        p = random_params(rng, 3, 2, 4, S=2.0)
        q = unflatten(flatten(p), 3, 2, 4, S=2.0)
        assert np.array_equal(p.theta, q.theta)
        assert np.array_equal(p.betas, q.betas)

    def test_flat_norm_bound(self, rng):
        for _ in range(10):
            p = random_params(rng, 3, 2, 6)
            assert np.linalg.norm(flatten(p).phi) <= p.S * np.sqrt(7) + 1e-12


class TestHybridParams:
    def test_rejects_norm_violation(self):
        with pytest.raises(ValueError):
            HybridParams(np.array([2.0, 0.0]), np.zeros((1, 2)), S=1.0)
        with pytest.raises(ValueError):
            HybridParams(np.zeros(2), np.array([[3.0, 0.0]]), S=1.0)


class TestMeanReward:
    def test_aligned_unit_vectors(self):
        p = HybridParams(np.array([1.0, 0.0]), np.array([[1.0, 0.0]]))
        assert mean_reward(p, 0, np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 2.0

    def test_zero_features(self, rng):
        p = random_params(rng, 3, 2, 2)
        assert mean_reward(p, 1, np.zeros(3), np.zeros(2)) == 0.0

    def test_matches_embedding(self, rng):
        p = random_params(rng, 3, 2, 4)
        phi = flatten(p).phi
        for _ in range(10):
            i = int(rng.integers(4))
            x, z = rng.standard_normal(3), rng.standard_normal(2)
            assert mean_reward(p, i, x, z) == pytest.approx(
                float(embed(i, x, z, 4).dense(4) @ phi), abs=1e-12
            )

    def test_bounded_by_2s(self, rng):
        p = random_params(rng, 3, 2, 4, S=1.5)
        ctx = random_round(rng, 3, 2, 4)
        assert np.all(np.abs(mean_rewards(p, ctx)) <= 2 * 1.5 + 1e-12)


class TestInstantaneousRegret:
    def test_simple_gap(self):
        p = HybridParams(np.array([1.0]), np.array([[0.0], [0.0]]))
        ctx = ContextRound(np.array([[0.5], [0.2]]), np.zeros((2, 1)))
        assert instantaneous_regret(p, ctx, 1) == pytest.approx(0.3)

    def test_zero_for_argmax(self, rng):
        p = random_params(rng, 3, 2, 5)
        ctx = random_round(rng, 3, 2, 5)
        best = int(np.argmax(mean_rewards(p, ctx)))
        assert instantaneous_regret(p, ctx, best) == 0.0

    def test_zero_for_tied_maximizer(self):
        p = HybridParams(np.array([1.0]), np.zeros((2, 1)))
        ctx = ContextRound(np.array([[0.7], [0.7]]), np.zeros((2, 1)))
        assert instantaneous_regret(p, ctx, 0) == 0.0
        assert instantaneous_regret(p, ctx, 1) == 0.0

    def test_matches_brute_force(self, rng):
        for _ in range(20):
            p = random_params(rng, 3, 2, 6)
            ctx = random_round(rng, 3, 2, 6)
            chosen = int(rng.integers(6))
            _, best = brute_force_best_arm(p, ctx)
            ref = best - mean_reward(p, chosen, ctx.xs[chosen], ctx.zs[chosen])
            assert instantaneous_regret(p, ctx, chosen) == pytest.approx(
                max(0.0, ref), abs=1e-12
            )
            assert instantaneous_regret(p, ctx, chosen) >= 0.0

    def test_out_of_range(self, rng):
        p = random_params(rng, 2, 2, 2)
        ctx = random_round(rng, 2, 2, 2)
        with pytest.raises(ValueError):
            instantaneous_regret(p, ctx, 2)
