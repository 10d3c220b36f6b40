"""Episode mechanics: window sizing, observation layout, streaming
normalizer, reward accounting, and env/kernel agreement."""

import hashlib
import math

import numpy as np
import pytest

from lobexec.episode_env import (MODE_ACTIONS, MODE_SCHEDULE, OBS_SIZE,
                                 EpisodeConfig, EpisodeEnv, NormalizerStats,
                                 RewardParams, episode_length, run_core)
from lobexec.errors import LobexecError
from lobexec.exec_engine import FeeSchedule, ImpactParams
from lobexec.indicators import compute_day, indicator_vector

NO_IMPACT = ImpactParams(k=0.0)
NO_FEES = FeeSchedule(taker_fee=0.0)
NO_PENALTY = RewardParams(inventory_penalty=0.0)


class TestEpisodeLength:
    def test_window_is_half_open(self, synth_day):
        # 1 s cadence: [t0, t0 + 60 s) holds exactly 60 snapshots.
        assert episode_length(synth_day, 0, 60) == 60
        assert episode_length(synth_day, 100, 3600) == 3600

    def test_steps_is_length_minus_one(self, synth_day):
        env = EpisodeEnv(EpisodeConfig(synth_day, 0, 60))
        assert env.length == 60
        assert env.steps == 59

    def test_overrun_rejected(self, synth_day):
        n = len(synth_day)
        with pytest.raises(ValueError):
            episode_length(synth_day, n - 30, 60)
        with pytest.raises(ValueError):
            episode_length(synth_day, n, 60)

    def test_degenerate_window_rejected(self, synth_day):
        with pytest.raises(ValueError):
            episode_length(synth_day, 0, 1)


class TestConfigValidation:
    def test_bad_params(self, synth_day):
        with pytest.raises(ValueError):
            EpisodeConfig(synth_day, 0, 60, initial_btc=0.0)
        with pytest.raises(ValueError):
            EpisodeConfig(synth_day, 0, 60, target_fraction=1.0)
        with pytest.raises(ValueError):
            EpisodeConfig(synth_day, 0, 60, trade_fraction=0.0)
        with pytest.raises(ValueError):
            EpisodeConfig(synth_day, 0, 60, trade_fraction=1.5)
        with pytest.raises(ValueError):
            RewardParams(inventory_penalty=-0.1)


class TestObservation:
    def test_layout(self, synth_day):
        env = EpisodeEnv(EpisodeConfig(synth_day, 5, 120))
        obs = env.reset()
        assert obs.shape == (OBS_SIZE,)
        i = 5
        mid = (synth_day.bid_px[i, 0] + synth_day.ask_px[i, 0]) / 2
        np.testing.assert_array_equal(obs[0:20], synth_day.bid_px[i] / mid)
        np.testing.assert_array_equal(obs[20:40], synth_day.bid_sz[i])
        np.testing.assert_array_equal(obs[40:60], synth_day.ask_px[i] / mid)
        np.testing.assert_array_equal(obs[60:80], synth_day.ask_sz[i])
        # Path-dependent indicators restart at the episode boundary, so the
        # expectation is row 0 of a sweep that begins at the start index.
        values, _ = compute_day(synth_day)
        expected = indicator_vector(None, synth_day.snapshot(i))[0]
        np.testing.assert_allclose(obs[80:91], expected, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(obs[80:87], values[i, :7], rtol=1e-12)
        np.testing.assert_allclose(obs[88], values[i, 8], rtol=1e-12)
        assert obs[91] == 1.0   # full horizon ahead
        assert obs[92] == 1.0   # full inventory

    def test_reset_is_reproducible(self, synth_day):
        cfg = EpisodeConfig(synth_day, 17, 300)
        a = EpisodeEnv(cfg).reset()
        b = EpisodeEnv(cfg).reset()
        np.testing.assert_array_equal(a, b)

    def test_time_to_go_counts_down_to_zero(self, synth_day):
        env = EpisodeEnv(EpisodeConfig(synth_day, 0, 10))
        obs = env.reset()
        seen = [obs[91]]
        while not env.done:
            obs = env.step(0.0).observation
            seen.append(obs[91])
        np.testing.assert_allclose(seen, np.linspace(1.0, 0.0, env.length),
                                   atol=1e-12)
        assert seen[-1] == 0.0


class TestStepping:
    def test_negative_action_holds(self, synth_day):
        env = EpisodeEnv(EpisodeConfig(synth_day, 0, 60))
        env.reset()
        res = env.step(-0.5)
        assert res.info["fill"].filled_qty == 0.0
        assert env.inventory == 1.0
        assert env.cash == 0.0

    def test_action_clipped_to_trade_fraction(self, flat_day):
        env = EpisodeEnv(EpisodeConfig(flat_day, 0, 60, trade_fraction=0.1),
                         impact=NO_IMPACT, fees=NO_FEES)
        env.reset()
        res = env.step(1.0)
        assert res.info["fill"].filled_qty == pytest.approx(0.1, abs=1e-15)
        assert env.inventory == pytest.approx(0.9, abs=1e-15)

    def test_geometric_inventory_decay(self, flat_day):
        # Selling the cap each step against effectively infinite depth
        # leaves (1 - f)^n of the starting inventory.
        env = EpisodeEnv(EpisodeConfig(flat_day, 0, 31, trade_fraction=0.1),
                         impact=NO_IMPACT, fees=NO_FEES)
        env.reset()
        for n in range(1, env.steps + 1):
            env.step(1.0)
            assert env.inventory == pytest.approx(0.9 ** n, rel=1e-12)

    def test_sell_only_inventory_never_increases(self, synth_day):
        rng = np.random.default_rng(11)
        env = EpisodeEnv(EpisodeConfig(synth_day, 40, 600))
        env.reset()
        prev = env.inventory
        while not env.done:
            env.step(float(rng.uniform(-0.3, 0.3)))
            assert env.inventory <= prev + 1e-15
            prev = env.inventory

    def test_step_lifecycle_errors(self, synth_day):
        env = EpisodeEnv(EpisodeConfig(synth_day, 0, 10))
        with pytest.raises(LobexecError):
            env.step(0.0)
        env.reset()
        for _ in range(env.steps):
            env.step(0.0)
        assert env.done
        with pytest.raises(LobexecError):
            env.step(0.0)

    def test_done_exactly_at_last_step(self, synth_day):
        env = EpisodeEnv(EpisodeConfig(synth_day, 0, 45))
        env.reset()
        flags = [env.step(0.01).done for _ in range(env.steps)]
        assert flags == [False] * (env.steps - 1) + [True]


class TestRewardAccounting:
    def test_hold_everything_reward_is_price_drift(self, synth_day):
        # No trades: cumulative reward collapses to pure mark-to-market
        # drift of the untouched inventory, minus the residual penalty.
        cfg = EpisodeConfig(synth_day, 0, 600)
        env = EpisodeEnv(cfg, reward_params=NO_PENALTY)
        env.reset()
        while not env.done:
            env.step(0.0)
        drift = (env.final_mid - env.arrival_mid) / env.arrival_mid
        assert env.cum_reward == pytest.approx(drift, rel=1e-12)

    def test_zero_friction_flat_book_reward_zero(self, flat_day):
        env = EpisodeEnv(EpisodeConfig(flat_day, 0, 120),
                         impact=NO_IMPACT, fees=NO_FEES,
                         reward_params=NO_PENALTY)
        env.reset()
        rng = np.random.default_rng(3)
        total = 0.0
        while not env.done:
            total += env.step(float(rng.uniform(0, 0.1))).reward
        assert abs(total) < 1e-9
        assert abs(env.cum_reward) < 1e-9

    def test_terminal_penalty_applied_once(self, flat_day):
        pen = RewardParams(inventory_penalty=0.5)
        cfg = EpisodeConfig(flat_day, 0, 60, target_fraction=0.0)
        env_p = EpisodeEnv(cfg, impact=NO_IMPACT, fees=NO_FEES,
                           reward_params=pen)
        env_0 = EpisodeEnv(cfg, impact=NO_IMPACT, fees=NO_FEES,
                           reward_params=NO_PENALTY)
        for env in (env_p, env_0):
            env.reset()
            while not env.done:
                env.step(0.0)
        assert env_p.residual_fraction == 1.0
        assert env_p.cum_reward == pytest.approx(env_0.cum_reward - 0.5,
                                                 abs=1e-12)


class TestEnvKernelAgreement:
    def test_action_plan_matches_fused_runner(self, synth_day):
        rng = np.random.default_rng(21)
        for start, horizon in ((0, 300), (700, 900), (1234, 600)):
            cfg = EpisodeConfig(synth_day, start, horizon)
            impact = ImpactParams(k=0.003)
            fees = FeeSchedule(taker_fee=0.001)
            steps = episode_length(synth_day, start, horizon) - 1
            plan = rng.uniform(-0.2, 0.15, steps)
            env = EpisodeEnv(cfg, impact=impact, fees=fees)
            env.reset()
            for a in plan:
                env.step(float(a))
            out = run_core(cfg, impact, fees, RewardParams(), MODE_ACTIONS,
                           plan=plan)
            assert env.cash == out.cash
            assert env.inventory == out.inventory
            assert env.cum_reward == out.cum_reward
            assert env.fills == out.fills
            assert env.arrival_mid == out.arrival_mid
            assert env.final_mid == out.final_mid

    def test_schedule_plan_length_checked(self, synth_day):
        cfg = EpisodeConfig(synth_day, 0, 60)
        with pytest.raises(ValueError):
            run_core(cfg, NO_IMPACT, NO_FEES, RewardParams(), MODE_SCHEDULE,
                     plan=np.zeros(7))


class TestNormalizerStats:
    def test_streaming_matches_batch(self):
        rng = np.random.default_rng(8)
        data = rng.normal(3.0, 2.5, size=(10_000, 6)) * \
            np.array([1.0, 10.0, 0.1, 100.0, 1e-3, 1e3])
        stats = NormalizerStats(n_entries=6)
        for row in data:
            stats.update(row)
        np.testing.assert_allclose(stats.mean, data.mean(axis=0), rtol=1e-9)
        np.testing.assert_allclose(stats.var, data.var(axis=0), rtol=1e-9)
        assert stats.count == 10_000

    def test_transform_standardizes(self):
        rng = np.random.default_rng(9)
        data = rng.normal(-4.0, 0.7, size=(5000, 3))
        stats = NormalizerStats(n_entries=3)
        for row in data:
            stats.update(row)
        z = np.array([stats.transform(row) for row in data])
        np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(z.var(axis=0), 1.0, rtol=1e-3)

    def test_constant_feature_maps_to_zero(self):
        stats = NormalizerStats(n_entries=2)
        for _ in range(50):
            stats.update(np.array([7.0, 7.0]))
        out = stats.transform(np.array([7.0, 7.0]))
        np.testing.assert_array_equal(out, [0.0, 0.0])

    def test_clip_bounds(self):
        stats = NormalizerStats(n_entries=1, clip=10.0)
        for v in (0.0, 1.0, 0.0, 1.0):
            stats.update(np.array([v]))
        assert stats.transform(np.array([1e9]))[0] == 10.0
        assert stats.transform(np.array([-1e9]))[0] == -10.0

    def test_save_load_roundtrip_bytes(self, tmp_path):
        rng = np.random.default_rng(10)
        stats = NormalizerStats(n_entries=93)
        for _ in range(200):
            stats.update(rng.normal(size=93))
        p1 = tmp_path / "a.lobn"
        p2 = tmp_path / "b.lobn"
        stats.save(p1)
        loaded = NormalizerStats.load(p1)
        assert loaded.frozen
        np.testing.assert_array_equal(loaded.mean, stats.mean)
        np.testing.assert_array_equal(loaded.var, stats.var)
        assert loaded.count == stats.count
        loaded.save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_frozen_rejects_update(self, tmp_path):
        stats = NormalizerStats(n_entries=4)
        stats.update(np.ones(4))
        p = tmp_path / "s.lobn"
        stats.save(p)
        loaded = NormalizerStats.load(p)
        with pytest.raises(LobexecError):
            loaded.update(np.ones(4))
        thawed = NormalizerStats.load(p, frozen=False)
        thawed.update(np.ones(4))   # explicitly unfrozen is writable

    def test_corrupt_file_rejected(self, tmp_path):
        p = tmp_path / "bad.lobn"
        p.write_bytes(b"XXXX" + b"\x00" * 64)
        with pytest.raises(LobexecError):
            NormalizerStats.load(p)
        q = tmp_path / "short.lobn"
        stats = NormalizerStats(n_entries=4)
        stats.update(np.ones(4))
        stats.save(q)
        q.write_bytes(q.read_bytes()[:-8])
        with pytest.raises(LobexecError):
            NormalizerStats.load(q)

    def test_wrong_entry_count_rejected(self):
        stats = NormalizerStats(n_entries=5)
        with pytest.raises(LobexecError):
            stats.update(np.ones(7))


class TestNoLeakage:
    def test_frozen_stats_untouched_by_episodes(self, synth_day, tmp_path):
        # Fit on one slice, freeze to disk, then run episodes elsewhere:
        # the file and in-memory moments must come out bit-identical.
        stats = NormalizerStats()
        fit_env = EpisodeEnv(EpisodeConfig(synth_day, 0, 120))
        obs = fit_env.reset()
        stats.update(obs)
        while not fit_env.done:
            stats.update(fit_env.step(0.05).observation)
        p = tmp_path / "frozen.lobn"
        stats.save(p)
        digest0 = hashlib.sha256(p.read_bytes()).hexdigest()

        frozen = NormalizerStats.load(p)
        mean0 = frozen.mean.copy()
        var0 = frozen.var.copy()
        env = EpisodeEnv(EpisodeConfig(synth_day, 500, 600), stats=frozen)
        env.reset()
        while not env.done:
            env.step(0.02)
        np.testing.assert_array_equal(frozen.mean, mean0)
        np.testing.assert_array_equal(frozen.var, var0)
        assert hashlib.sha256(p.read_bytes()).hexdigest() == digest0

    def test_normalized_obs_actually_normalized(self, synth_day):
        stats = NormalizerStats()
        env0 = EpisodeEnv(EpisodeConfig(synth_day, 0, 300))
        stats.update(env0.reset())
        while not env0.done:
            stats.update(env0.step(0.05).observation)
        env = EpisodeEnv(EpisodeConfig(synth_day, 0, 300), stats=stats)
        obs = env.reset()
        assert np.all(np.abs(obs) <= 10.0)
        raw = env0.reset()
        assert not np.array_equal(obs, raw)
