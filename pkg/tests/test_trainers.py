"""Trainer update-rule tests: target oracles, gradient checks, reductions."""

import numpy as np
import pytest

from gacqd import heads, nets, trainers
from gacqd.errors import EmptyBufferError, ShapeError
from gacqd.replay import Batch, ReplayBuffer


def small_trainer(family, seed=0, state_dim=3, action_dim=2, **kw):
    kw.setdefault("policy_hidden", (8, 8))
    kw.setdefault("critic_hidden", (8, 8))
    kw.setdefault("batch_size", 8)
    return trainers.make_trainer(family, state_dim, action_dim,
                                 np.random.default_rng(seed), **kw)


def random_batch(seed, n=8, state_dim=3, action_dim=2, done=None, r=None):
    rng = np.random.default_rng(seed)
    return Batch(
        s=rng.normal(size=(n, state_dim)),
        a=rng.uniform(-1, 1, size=(n, action_dim)),
        s_next=rng.normal(size=(n, state_dim)),
        r=rng.normal(size=n) if r is None else np.full(n, float(r)),
        done=np.zeros(n, dtype=bool) if done is None else np.full(n, done),
    )


def filled_buffer(seed, n=64, state_dim=3, action_dim=2):
    rng = np.random.default_rng(seed)
    buf = ReplayBuffer(1000, state_dim, action_dim)
    buf.push_arrays(rng.normal(size=(n, state_dim)),
                    rng.uniform(-1, 1, size=(n, action_dim)),
                    rng.normal(size=(n, state_dim)),
                    rng.normal(size=n), rng.random(n) < 0.1)
    return buf


class TestTd3Critic:
    def test_degenerate_target_zero_loss(self):
        state = small_trainer("td3", gamma=0.0)
        state.critic1[:] = 0.0
        state.critic2[:] = 0.0
        state.target_critic1[:] = 0.0
        state.target_critic2[:] = 0.0
        batch = random_batch(1, r=0.0)
        report = trainers.update_critic(state, batch, np.random.default_rng(0))
        assert report.loss < 1e-12
        assert np.array_equal(state.critic1, np.zeros_like(state.critic1))

    def test_targets_match_per_transition_oracle_without_noise(self):
        state = small_trainer("td3", seed=3, policy_noise=0.0)
        batch = random_batch(2)
        y = trainers.bellman_targets(state, batch, np.random.default_rng(5))
        for i in range(len(batch)):
            a2 = nets.forward(state.actor_spec, state.target_actor,
                              batch.s_next[i])
            x2 = np.concatenate([batch.s_next[i], a2])
            q1 = nets.forward(state.critic_spec, state.target_critic1, x2)[0]
            q2 = nets.forward(state.critic_spec, state.target_critic2, x2)[0]
            expected = batch.r[i] + state.gamma * min(q1, q2)
            assert y[i] == pytest.approx(expected, rel=1e-12)

    def test_done_cuts_bootstrap_exactly(self):
        state = small_trainer("td3", seed=4)
        batch = random_batch(3, done=True)
        y = trainers.bellman_targets(state, batch, np.random.default_rng(6))
        assert np.array_equal(y, batch.r)

    def test_noise_is_clipped(self):
        state = small_trainer("td3", seed=5, policy_noise=10.0, noise_clip=0.2)
        batch = random_batch(4)
        rng = np.random.default_rng(7)
        y = trainers.bellman_targets(state, batch, rng)
        # replay the draw to verify the clip bound was applied
        rng2 = np.random.default_rng(7)
        eps = np.clip(rng2.normal(0.0, 10.0, (len(batch), 2)), -0.2, 0.2)
        assert np.abs(eps).max() <= 0.2
        assert np.isfinite(y).all()

    def test_twin_swap_gives_identical_targets(self):
        state = small_trainer("td3", seed=8)
        swapped = trainers.clone_state(state)
        swapped.critic1, swapped.critic2 = swapped.critic2, swapped.critic1
        swapped.target_critic1, swapped.target_critic2 = \
            swapped.target_critic2, swapped.target_critic1
        batch = random_batch(9)
        y1 = trainers.bellman_targets(state, batch, np.random.default_rng(1))
        y2 = trainers.bellman_targets(swapped, batch, np.random.default_rng(1))
        assert np.array_equal(y1, y2)


class TestTd3Actor:
    def test_flat_critic_means_no_update(self):
        state = small_trainer("td3", seed=10)
        state.critic1[:] = 0.0
        before = state.actor.copy()
        trainers.update_actor(state, random_batch(11), np.random.default_rng(0))
        assert np.array_equal(state.actor, before)

    def test_actor_moves_toward_quadratic_peak(self):
        # fit critic1 to Q(s, a) = -(a - 0.3)^2, then ascend it
        state = small_trainer("td3", seed=12, state_dim=1, action_dim=1,
                              critic_hidden=(32, 32))
        rng = np.random.default_rng(13)
        adam = nets.AdamState.fresh(state.critic_spec.param_count)
        for _ in range(3000):
            a = rng.uniform(-1, 1, size=(64, 1))
            x = np.concatenate([np.zeros((64, 1)), a], axis=1)
            target = -((a[:, 0] - 0.3) ** 2)
            q, cache = nets.forward_batch(state.critic_spec, state.critic1, x,
                                          keep_cache=True)
            up = (2.0 * (q[:, 0] - target))[:, None]
            pg, _ = nets.backward_batch(state.critic_spec, state.critic1, x,
                                        up, cache=cache)
            nets.adam_step_inplace(state.critic1, pg, adam, 1e-3)
        probe = np.zeros((4, 1))
        batch = Batch(probe, np.zeros((4, 1)), probe, np.zeros(4),
                      np.zeros(4, dtype=bool))
        dist = [abs(float(nets.forward(state.actor_spec, state.actor,
                                       probe[0])[0]) - 0.3)]
        for _ in range(300):
            trainers.update_actor(state, batch, np.random.default_rng(0))
            dist.append(abs(float(nets.forward(state.actor_spec, state.actor,
                                               probe[0])[0]) - 0.3))
        # monotone approach while far from the peak, and close at the end
        for prev, cur in zip(dist, dist[1:]):
            if prev > 0.05:
                assert cur < prev
        assert dist[-1] < 0.05

    def test_gradient_matches_finite_differences(self):
        state = small_trainer("td3", seed=14)
        batch = random_batch(15)

        def vag(p):
            return trainers.actor_loss_and_grad(state, p, batch)

        assert nets.grad_check(state.actor.copy(), vag) < 1e-4


class TestSacCritic:
    def test_done_batches_reduce_to_reward(self):
        for family in ("sac", "droq"):
            state = small_trainer(family, seed=16)
            batch = random_batch(17, done=True)
            y = trainers.bellman_targets(state, batch, np.random.default_rng(2))
            assert np.array_equal(y, batch.r)

    def test_targets_match_frozen_noise_oracle(self):
        state = small_trainer("sac", seed=18)
        batch = random_batch(19)
        y = trainers.bellman_targets(state, batch, np.random.default_rng(20))
        # replicate the draw order: one xi block, then no masks for sac
        xi = np.random.default_rng(20).standard_normal((len(batch), 2))
        for i in range(len(batch)):
            out = nets.forward(state.actor_spec, state.actor, batch.s_next[i])
            mu, log_std = out[:2], np.clip(out[2:], heads.LOG_STD_MIN,
                                           heads.LOG_STD_MAX)
            sigma = np.exp(log_std)
            z = mu + sigma * xi[i]
            a2 = np.tanh(z)
            logp = float(np.sum(-0.5 * xi[i] ** 2 - 0.5 * np.log(2 * np.pi)
                                - log_std - np.log1p(-np.tanh(z) ** 2)))
            x2 = np.concatenate([batch.s_next[i], a2])
            q1 = nets.forward(state.critic_spec, state.target_critic1, x2)[0]
            q2 = nets.forward(state.critic_spec, state.target_critic2, x2)[0]
            expected = batch.r[i] + state.gamma * (min(q1, q2)
                                                   - state.alpha * logp)
            assert y[i] == pytest.approx(expected, rel=1e-9)

    def test_droq_rate_zero_reduces_to_sac_update(self):
        sac = small_trainer("sac", seed=21)
        droq = small_trainer("droq", seed=21, dropout_rate=0.0, layer_norm=False)
        batch = random_batch(22)
        trainers.update_critic(sac, batch, np.random.default_rng(3))
        trainers.update_critic(droq, batch, np.random.default_rng(3))
        assert trainers.state_fingerprint(sac) == trainers.state_fingerprint(droq)

    def test_droq_uses_dropout_during_training(self):
        state = small_trainer("droq", seed=23, dropout_rate=0.5)
        batch = random_batch(24)
        y1 = trainers.bellman_targets(state, batch, np.random.default_rng(4))
        y2 = trainers.bellman_targets(state, batch, np.random.default_rng(5))
        assert not np.array_equal(y1, y2)  # masks differ across streams

    def test_critic_gradient_matches_finite_differences(self):
        for family in ("sac", "droq"):
            state = small_trainer(family, seed=25)
            batch = random_batch(26)
            y = trainers.bellman_targets(state, batch, np.random.default_rng(6))
            masks = nets.draw_masks(state.critic_spec, len(batch),
                                    np.random.default_rng(7))

            def vag(p):
                loss, grad, _ = trainers.critic_loss_and_grad(state, p, batch,
                                                              y, masks)
                return loss, grad

            assert nets.grad_check(state.critic1.copy(), vag) < 1e-4


class TestSacActor:
    def test_gradient_matches_finite_differences(self):
        for family, seed in (("sac", 27), ("droq", 28)):
            state = small_trainer(family, seed=seed)
            batch = random_batch(seed + 1)
            xi = np.random.default_rng(seed + 2).standard_normal((len(batch), 2))
            masks = (nets.draw_masks(state.critic_spec, len(batch),
                                     np.random.default_rng(seed + 3)),
                     nets.draw_masks(state.critic_spec, len(batch),
                                     np.random.default_rng(seed + 4)))

            def vag(p):
                return trainers.actor_loss_and_grad(state, p, batch, xi=xi,
                                                    critic_masks=masks)

            assert nets.grad_check(state.actor.copy(), vag) < 1e-4

    def test_large_alpha_flat_critic_raises_entropy(self):
        state = small_trainer("sac", seed=29)
        state.critic1[:] = 0.0
        state.critic2[:] = 0.0
        state.log_alpha = np.log(50.0)
        # start from a near-deterministic policy: log-std output bias at -3
        state.actor[-2:] = -3.0
        batch = random_batch(30)
        out0 = nets.forward(state.actor_spec, state.actor, batch.s)
        std_before = np.mean(np.clip(out0[:, 2:], heads.LOG_STD_MIN,
                                     heads.LOG_STD_MAX))
        rng = np.random.default_rng(8)
        for _ in range(100):
            trainers.update_actor(state, batch, rng)
        out1 = nets.forward(state.actor_spec, state.actor, batch.s)
        std_after = np.mean(np.clip(out1[:, 2:], heads.LOG_STD_MIN,
                                    heads.LOG_STD_MAX))
        assert std_after > std_before

    def test_zero_alpha_flat_critic_means_no_gradient(self):
        state = small_trainer("sac", seed=31)
        state.critic1[:] = 0.0
        state.critic2[:] = 0.0
        state.log_alpha = -np.inf  # alpha = 0
        before = state.actor.copy()
        trainers.update_actor(state, random_batch(32), np.random.default_rng(9))
        assert np.array_equal(state.actor, before)


class TestAlpha:
    def test_init_value(self):
        state = small_trainer("sac", alpha_init=1.0)
        assert state.alpha == 1.0

    def test_entropy_below_target_raises_alpha(self):
        state = small_trainer("sac", seed=33)
        # a near-deterministic policy has strongly negative entropy
        state.target_entropy = 100.0  # far above any reachable entropy
        before = state.alpha
        trainers.update_alpha(state, random_batch(34), np.random.default_rng(0))
        assert state.alpha > before

    def test_entropy_above_target_lowers_alpha(self):
        state = small_trainer("sac", seed=35)
        state.target_entropy = -1000.0
        before = state.alpha
        trainers.update_alpha(state, random_batch(36), np.random.default_rng(1))
        assert state.alpha < before

    def test_fixed_point_keeps_alpha(self):
        state = small_trainer("sac", seed=37)
        batch = random_batch(38)
        out = nets.forward(state.actor_spec, state.actor, batch.s)
        xi = np.random.default_rng(2).standard_normal((len(batch), 2))
        _, logp, _, _, _ = heads.squash_sample(out, xi)
        state.target_entropy = -float(np.mean(logp))
        before = state.log_alpha
        trainers.update_alpha(state, batch, np.random.default_rng(2))
        assert abs(state.log_alpha - before) < 1e-9

    def test_rejected_for_td3(self):
        state = small_trainer("td3")
        with pytest.raises(ShapeError):
            trainers.update_alpha(state, random_batch(39),
                                  np.random.default_rng(0))


class TestTrainLoop:
    def test_zero_loops_is_a_noop(self):
        state = small_trainer("sac", seed=40)
        before = trainers.state_fingerprint(state)
        out = trainers.train_loop(state, filled_buffer(41), 0, 2, 1,
                                  np.random.default_rng(0))
        assert trainers.state_fingerprint(out) == before

    def test_update_counts_follow_loop_structure(self):
        state = small_trainer("td3", seed=42)
        log = []
        trainers.train_loop(state, filled_buffer(43), 5, 2, 1,
                            np.random.default_rng(1), log=log)
        critic_rows = [r for r in log if r[3] is not None]
        actor_rows = [r for r in log if r[4] is not None]
        assert len(critic_rows) == 10 and len(actor_rows) == 5
        assert [r[1] for r in log] == list(range(15))

    def test_empty_buffer_raises(self):
        state = small_trainer("td3", seed=44)
        empty = ReplayBuffer(10, 3, 2)
        with pytest.raises(EmptyBufferError):
            trainers.train_loop(state, empty, 1, 1, 1, np.random.default_rng(0))

    def test_target_networks_stay_in_online_hull(self):
        state = small_trainer("td3", seed=45)
        buf = filled_buffer(46)
        rng = np.random.default_rng(2)
        probes = [0, 7, 23]
        lows = {i: min(state.critic1[i], state.target_critic1[i]) for i in probes}
        highs = {i: max(state.critic1[i], state.target_critic1[i]) for i in probes}
        for _ in range(50):
            trainers.update_critic(state, buf.sample(8, rng), rng)
            for i in probes:
                lows[i] = min(lows[i], state.critic1[i])
                highs[i] = max(highs[i], state.critic1[i])
                assert lows[i] - 1e-12 <= state.target_critic1[i] <= highs[i] + 1e-12

    def test_droq_reduction_holds_over_many_loops(self):
        sac = small_trainer("sac", seed=47)
        droq = small_trainer("droq", seed=47, dropout_rate=0.0, layer_norm=False)
        buf = filled_buffer(48)
        trainers.train_loop(sac, buf, 10, 2, 1, np.random.default_rng(3))
        trainers.train_loop(droq, buf, 10, 2, 1, np.random.default_rng(3))
        assert trainers.state_fingerprint(sac) == trainers.state_fingerprint(droq)
