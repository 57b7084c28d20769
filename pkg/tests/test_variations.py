"""Offspring generator tests: distribution laws, purity, split arithmetic."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gacqd import nets, trainers, variations
from gacqd.errors import EmptyBufferError, ShapeError
from gacqd.replay import ReplayBuffer
from gacqd.variations import VariationConfig, iso_line, pg_variation, split_batch


def filled_buffer(seed, state_dim=3, action_dim=2, n=64):
    rng = np.random.default_rng(seed)
    buf = ReplayBuffer(1000, state_dim, action_dim)
    buf.push_arrays(rng.normal(size=(n, state_dim)),
                    rng.uniform(-1, 1, size=(n, action_dim)),
                    rng.normal(size=(n, state_dim)),
                    rng.normal(size=n), np.zeros(n, dtype=bool))
    return buf


def small_trainer(family="td3", seed=0):
    return trainers.make_trainer(family, 3, 2, np.random.default_rng(seed),
                                 policy_hidden=(8, 8), critic_hidden=(8, 8),
                                 batch_size=8)


class TestSplitBatch:
    def test_paper_shape(self):
        assert split_batch(128, 0.5) == (64, 64)

    def test_pure_ga(self):
        assert split_batch(32, 0.0) == (0, 32)

    def test_floor_rule(self):
        assert split_batch(7, 0.5) == (3, 4)

    @given(st.integers(1, 500), st.floats(0.0, 1.0))
    @settings(max_examples=100, deadline=None)
    def test_parts_always_sum_to_batch(self, b, p):
        n_pg, n_ga = split_batch(b, p)
        assert n_pg + n_ga == b and n_pg >= 0 and n_ga >= 0


class TestIsoLine:
    def test_degenerate_operator_copies_parent1(self):
        cfg = VariationConfig(sigma_iso=0.0, sigma_line=0.0)
        p1 = np.arange(5.0)
        p2 = -np.ones(5)
        child = iso_line(p1, p2, cfg, np.random.default_rng(0))
        assert np.array_equal(child, p1)

    def test_identical_parents_leave_pure_iso_noise(self):
        cfg = VariationConfig(sigma_iso=0.01, sigma_line=5.0)
        p = np.zeros(4)
        rng = np.random.default_rng(1)
        deltas = np.array([iso_line(p, p, cfg, rng) for _ in range(10_000)])
        assert abs(deltas.std() - 0.01) / 0.01 < 0.02

    def test_zero_iso_children_lie_on_parent_line(self):
        cfg = VariationConfig(sigma_iso=0.0, sigma_line=0.3)
        p1 = np.array([0.0, 1.0, 2.0])
        p2 = np.array([1.0, 3.0, 0.0])
        child = iso_line(p1, p2, cfg, np.random.default_rng(2))
        t = (child - p1) / (p2 - p1)
        assert np.allclose(t, t[0])

    def test_mean_offset_is_centered(self):
        cfg = VariationConfig(sigma_iso=0.02, sigma_line=0.1)
        p1 = np.zeros(3)
        p2 = np.array([1.0, -1.0, 2.0])
        rng = np.random.default_rng(3)
        n = 100_000
        deltas = np.array([iso_line(p1, p2, cfg, rng) for _ in range(n)])
        # E[child - p1] = 0; allow 3 standard errors of the dominant term
        se = np.sqrt((cfg.sigma_iso**2 + (cfg.sigma_line * p2)**2) / n)
        assert np.all(np.abs(deltas.mean(axis=0)) < 3 * se + 1e-12)

    def test_length_mismatch_raises(self):
        with pytest.raises(ShapeError):
            iso_line(np.zeros(3), np.zeros(4), VariationConfig(),
                     np.random.default_rng(0))


class TestPgVariation:
    def test_zero_steps_returns_parent(self):
        trainer = small_trainer()
        cfg = VariationConfig(g_pg=0)
        parent = trainer.actor.copy()
        child = pg_variation(parent, trainer, filled_buffer(4), cfg,
                             np.random.default_rng(0))
        assert np.array_equal(child, parent)
        assert child is not parent

    def test_flat_critic_keeps_child_near_parent(self):
        trainer = small_trainer(seed=5)
        trainer.critic1[:] = 0.0
        cfg = VariationConfig(g_pg=20)
        parent = trainer.actor.copy()
        child = pg_variation(parent, trainer, filled_buffer(6), cfg,
                             np.random.default_rng(1))
        assert np.max(np.abs(child - parent)) < 1e-9

    def test_trainer_state_is_bit_identical_after_variation(self):
        for family in ("td3", "sac", "droq"):
            trainer = small_trainer(family, seed=7)
            before = trainers.state_fingerprint(trainer)
            pg_variation(trainer.actor.copy(), trainer, filled_buffer(8),
                         VariationConfig(g_pg=25), np.random.default_rng(2))
            assert trainers.state_fingerprint(trainer) == before

    def test_quadratic_critic_improves_child_actions(self):
        # critic trained to Q = -(a - 0.3)^2 as the scalar improvement oracle
        trainer = trainers.make_trainer("td3", 1, 1, np.random.default_rng(9),
                                        policy_hidden=(8, 8),
                                        critic_hidden=(32, 32), batch_size=16)
        rng = np.random.default_rng(10)
        adam = nets.AdamState.fresh(trainer.critic_spec.param_count)
        for _ in range(3000):
            a = rng.uniform(-1, 1, size=(64, 1))
            x = np.concatenate([np.zeros((64, 1)), a], axis=1)
            target = -((a[:, 0] - 0.3) ** 2)
            q, cache = nets.forward_batch(trainer.critic_spec, trainer.critic1,
                                          x, keep_cache=True)
            pg, _ = nets.backward_batch(trainer.critic_spec, trainer.critic1, x,
                                        (2.0 * (q[:, 0] - target))[:, None],
                                        cache=cache)
            nets.adam_step_inplace(trainer.critic1, pg, adam, 1e-3)
        buf = filled_buffer(11, state_dim=1, action_dim=1)
        buf._s[:] = 0.0  # probe state everywhere
        parent = trainer.actor.copy()
        child = pg_variation(parent, trainer, buf,
                             VariationConfig(g_pg=100, pg_lr=0.01),
                             np.random.default_rng(3))
        probes = np.zeros((5, 1))
        for s in probes:
            before = float(nets.forward(trainer.actor_spec, parent, s)[0])
            after = float(nets.forward(trainer.actor_spec, child, s)[0])
            assert abs(after - 0.3) < abs(before - 0.3)

    def test_empty_buffer_raises(self):
        trainer = small_trainer(seed=12)
        with pytest.raises(EmptyBufferError):
            pg_variation(trainer.actor.copy(), trainer,
                         ReplayBuffer(10, 3, 2), VariationConfig(g_pg=1),
                         np.random.default_rng(0))

    def test_wrong_parent_length_raises(self):
        trainer = small_trainer(seed=13)
        with pytest.raises(ShapeError):
            pg_variation(np.zeros(3), trainer, filled_buffer(14),
                         VariationConfig(g_pg=1), np.random.default_rng(0))
