"""Acceptance gate: one test per release criterion.

Each test pins the stated tolerance and prints the measured quantity, so
the -v run reads as a criterion-by-criterion pass/fail ledger.
"""

import hashlib
import json
import struct
import time
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

from lobexec.baselines import Schedule, run_schedule, twap_schedule
from lobexec.cli import main
from lobexec.episode_env import (EpisodeConfig, EpisodeEnv, NormalizerStats,
                                 RewardParams, RunOutcome, episode_length)
from lobexec.eval_protocol import pnl_percent, run_day, select_starts
from lobexec.exec_engine import FeeSchedule, ImpactParams, settle_sell
from lobexec.policies import run_policy
from lobexec.policy_bridge import BridgeSession, EnvAdapter
from lobexec.snapshot_store import load_day
from lobexec.stats import bh_adjust, bootstrap_ci_mean, wilcoxon_one_sided
from lobexec.synth import write_month
from conftest import bh_brute, make_static_day, random_ladder, wilcoxon_enum_p

NO_FEES = FeeSchedule(taker_fee=0.0)
NO_IMPACT = ImpactParams(k=0.0)
NO_PENALTY = RewardParams(inventory_penalty=0.0)


@pytest.fixture(scope="module")
def month_data(tmp_path_factory):
    """27 synthetic days (one date held out), 3 hours each at 1 s."""
    d = tmp_path_factory.mktemp("acc_month")
    written, skipped = write_month(d, start_date="20200201", n_days=28,
                                   missing_index=15, seed=7)
    assert len(written) == 27 and skipped == ["20200216"]
    return d


@pytest.fixture(scope="module")
def pipeline(month_data, tmp_path_factory):
    """Timed eval-compare + stats-eval over the synthetic month."""
    out = tmp_path_factory.mktemp("acc_out")
    eval_args = ["eval-compare", "--data-dir", str(month_data),
                 "--out-dir", str(out), "--horizons", "3600",
                 "--k-starts", "10", "--policy", "oracle",
                 "--impact-k", "0.003"]
    stats_args = ["stats-eval", "--out-dir", str(out)]
    t0 = time.perf_counter()
    rc_eval = main(eval_args)
    rc_stats = main(stats_args)
    elapsed = time.perf_counter() - t0
    return SimpleNamespace(out=out, eval_args=eval_args,
                           stats_args=stats_args, rc=(rc_eval, rc_stats),
                           elapsed=elapsed)


def test_fill_engine_matches_brute_force_walk():
    """1,000 random books: average price and filled quantity against an
    independent level walk, 1e-12 relative, under 5 seconds."""
    def walk(bpx, bsz, qty, disp):
        filled = proceeds = 0.0
        rem = qty
        for price, size in zip(bpx, bsz):
            if rem <= 0.0:
                break
            if size <= 0.0:
                continue
            eff = price + disp
            if eff <= 0.0:
                break
            take = size if size < rem else rem
            filled += take
            proceeds += take * eff
            rem -= take
        return filled, proceeds

    rng = np.random.default_rng(1000)
    params = ImpactParams(k=0.1)
    fees = FeeSchedule(taker_fee=0.001)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(1000):
        bpx, bsz, _, _ = random_ladder(rng)
        if rng.random() < 0.25:
            bsz[rng.integers(0, 20, 4)] = 0.0
        qty = float(rng.uniform(0.0, 1.4) * bsz.sum())
        disp = float(rng.uniform(-2.0, 0.0))
        filled, proceeds, _, _, _ = settle_sell(
            bpx, bsz, 100.0, qty, disp, params, fees, float(bsz.sum()))
        f_ref, p_ref = walk(bpx, bsz, qty, disp)
        avg = proceeds / filled if filled > 0 else 0.0
        avg_ref = p_ref / f_ref if f_ref > 0 else 0.0
        worst = max(worst,
                    abs(filled - f_ref) / max(1.0, abs(f_ref)),
                    abs(avg - avg_ref) / max(1.0, abs(avg_ref)))
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-12
    assert elapsed < 5.0
    print(f"PASS fill oracle: worst rel diff {worst:.2e}, {elapsed:.2f}s")


def test_zero_friction_identity_all_policies(flat_day):
    """fees=0, k=0 on the flat deep book: every policy's pnl_percent is
    0 +- 1e-9 at 1800/3600/7200 s."""
    worst = 0.0
    for horizon_s in (1800, 3600, 7200):
        for start in select_starts(flat_day, horizon_s, k=2):
            cfg = EpisodeConfig(flat_day, start, horizon_s)
            for name in ("twap", "vwap", "random", "oracle"):
                out = run_policy(name, cfg, NO_IMPACT, NO_FEES, NO_PENALTY)
                worst = max(worst, abs(pnl_percent(out)))
    assert worst <= 1e-9
    print(f"PASS zero-friction identity: worst |pnl| {worst:.2e}%")


def test_burst_never_beats_splits():
    """Static book, k > 0: one burst's proceeds <= every m-way split's,
    m in {2, 5, 10}; strict when the impact half life is inside the
    horizon."""
    day = make_static_day(n=130)
    cfg = EpisodeConfig(day, 0, 120, initial_btc=10.0)
    steps = episode_length(day, 0, 120) - 1
    target = 10.0

    def split_plan(m):
        plan = np.zeros(steps)
        for j in range(m):
            plan[j * steps // m] += target / m
        return plan

    for half_life, strict in ((5.0, True), (600.0, False)):
        impact = ImpactParams(k=0.001, half_life_s=half_life)
        burst = run_schedule(Schedule(split_plan(1), target), cfg, impact,
                             NO_FEES, NO_PENALTY)
        for m in (2, 5, 10):
            split = run_schedule(Schedule(split_plan(m), target), cfg,
                                 impact, NO_FEES, NO_PENALTY)
            assert split.inventory < 1e-9 and burst.inventory < 1e-9
            if strict:
                assert burst.cash < split.cash, (half_life, m)
            else:
                assert burst.cash <= split.cash + 1e-9, (half_life, m)
    print("PASS impact monotonicity: burst <= splits for m in {2,5,10}, "
          "strict at half_life < horizon")


def test_wilcoxon_exact_small_samples():
    """[1,2,3] -> one-sided p = 0.125 exactly; 100 random n <= 12 samples
    match the full 2^n sign enumeration within 1e-12."""
    assert wilcoxon_one_sided([1.0, 2.0, 3.0]).p_value == 0.125
    rng = np.random.default_rng(414)
    worst = 0.0
    for trial in range(100):
        n = int(rng.integers(2, 13))
        if trial % 2 == 0:
            d = rng.normal(0.2, 1.0, n)
        else:
            d = rng.integers(-4, 5, n).astype(np.float64)
        res = wilcoxon_one_sided(d)
        if res.degenerate:
            assert not d[d != 0.0].size
            continue
        worst = max(worst, abs(res.p_value - wilcoxon_enum_p(d)))
    assert worst <= 1e-12
    print(f"PASS wilcoxon exactness: worst |p - enum| {worst:.2e}")


def test_bh_matches_definition():
    """1,000 random p-vectors (m <= 20): step-up equals the brute-force
    definition exactly, and adjusted >= raw throughout."""
    rng = np.random.default_rng(2020)
    for trial in range(1000):
        m = int(rng.integers(1, 21))
        p = rng.uniform(0.0, 1.0, m)
        if trial % 3 == 0:
            p = np.round(p, 1)
        adj = bh_adjust(p)
        np.testing.assert_array_equal(adj, bh_brute(p))
        assert (adj >= p - 1e-15).all()
    print("PASS BH step-up: 1000/1000 vectors equal the definition")


def test_bootstrap_coverage_calibrated():
    """N(1,1) gaps with n=27, 1,000 trials: the 95% CI covers the true
    mean at a rate inside [93%, 97%]; identical seeds give identical
    intervals."""
    master = np.random.default_rng(np.random.SeedSequence(20200227))
    covered = 0
    trials = 1000
    for trial in range(trials):
        sample = master.normal(1.0, 1.0, 27)
        lo, hi = bootstrap_ci_mean(sample, resamples=10000, level=0.95,
                                   seed=trial)
        covered += int(lo <= 1.0 <= hi)
    rate = covered / trials
    assert 0.93 <= rate <= 0.97
    probe = np.arange(27.0)
    assert bootstrap_ci_mean(probe, seed=42) == bootstrap_ci_mean(probe, seed=42)
    print(f"PASS bootstrap calibration: coverage {rate:.3f}")


def test_reward_pnl_identity(synth_day):
    """inventory_penalty=0: 100 x sum of step rewards equals pnl_percent
    within 1e-9 on 100 random episodes."""
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(100):
        horizon_s = int(rng.integers(30, 600))
        start = int(rng.integers(0, len(synth_day) - horizon_s - 1))
        cfg = EpisodeConfig(synth_day, start, horizon_s,
                            trade_fraction=float(rng.uniform(0.05, 0.5)))
        impact = ImpactParams(k=float(rng.uniform(0.0, 0.01)))
        fees = FeeSchedule(taker_fee=float(rng.uniform(0.0, 0.002)))
        env = EpisodeEnv(cfg, impact=impact, fees=fees,
                         reward_params=NO_PENALTY)
        env.reset()
        while not env.done:
            env.step(float(rng.uniform(-1.0, 1.0)))
        out = RunOutcome(initial_btc=cfg.initial_btc, cash=env.cash,
                         inventory=env.inventory, fills=env.fills,
                         cum_reward=env.cum_reward,
                         arrival_mid=env.arrival_mid, final_mid=env.final_mid)
        worst = max(worst, abs(100.0 * env.cum_reward - pnl_percent(out)))
    assert worst <= 1e-9
    print(f"PASS reward/pnl identity: worst |100*R - pnl| {worst:.2e}")


def test_end_to_end_synthetic_month(pipeline):
    """Oracle vs TWAP and VWAP over the 27-day synthetic month at
    H=3600 s: positive mean gap, BH-adjusted one-sided p < 0.05, strictly
    positive bootstrap CI; pipeline wall time under 2 minutes."""
    assert pipeline.rc == (0, 0)
    stats = pd.read_csv(pipeline.out / "stats.csv")
    rows = stats[stats["horizon_s"] == 3600]
    assert set(rows["baseline"]) == {"TWAP", "VWAP"}
    for _, row in rows.iterrows():
        assert row["n_days"] == 27
        assert row["mean_gap"] > 0.0, row["baseline"]
        assert row["p_adj"] < 0.05, row["baseline"]
        assert row["ci_low"] > 0.0, row["baseline"]
    assert pipeline.elapsed < 120.0
    gaps = [f"{r['baseline']}: {r['mean_gap']:.4f}% p_adj={r['p_adj']:.2g} "
            f"ci_low={r['ci_low']:.4f}" for _, r in rows.iterrows()]
    print(f"PASS end-to-end month ({pipeline.elapsed:.1f}s): " + "; ".join(gaps))


def test_impact_sweep_preserves_gap_sign(month_data):
    """Scaling (k, half_life) by 0.5/1/2 keeps the oracle-vs-TWAP mean
    daily gap positive on the synthetic month at H=3600 s."""
    base = ImpactParams(k=0.003, half_life_s=60.0)
    days = [load_day(p)[0] for p in sorted(month_data.glob("*.lobd"))]
    signs = {}
    for factor in (0.5, 1.0, 2.0):
        impact = base.scaled(factor)
        gaps = []
        for day in days:
            rows = run_day(day, 3600, policy="oracle", k=4, impact=impact)
            rl = np.mean([r.pnl_percent for r in rows if r.method == "RL"])
            tw = np.mean([r.pnl_percent for r in rows if r.method == "TWAP"])
            gaps.append(rl - tw)
        signs[factor] = float(np.mean(gaps))
        assert signs[factor] > 0.0, f"mean gap flipped sign at x{factor}"
    print("PASS impact sweep: mean gaps " +
          ", ".join(f"x{f}: {g:+.4f}%" for f, g in signs.items()))


def test_determinism_and_frozen_stats(pipeline, synth_day, tmp_path):
    """Rerunning eval-compare and stats-eval with the same inputs yields
    byte-identical artifacts; a frozen normalizer file hashes the same
    before and after serving evaluations."""
    names = ["episodes_h3600_k10.csv", "daily_h3600_k10.csv",
             "manifest.json", "stats.csv", "report.md"]
    before = {n: (pipeline.out / n).read_bytes() for n in names}
    assert main(pipeline.eval_args) == 0
    assert main(pipeline.stats_args) == 0
    for n in names:
        assert (pipeline.out / n).read_bytes() == before[n], n

    stats = NormalizerStats()
    env = EpisodeEnv(EpisodeConfig(synth_day, 0, 300))
    stats.update(env.reset())
    while not env.done:
        stats.update(env.step(0.05).observation)
    path = tmp_path / "frozen.lobn"
    stats.save(path)
    digest = hashlib.sha256(path.read_bytes()).hexdigest()

    frozen = NormalizerStats.load(path)
    run = EpisodeEnv(EpisodeConfig(synth_day, 1000, 600), stats=frozen)
    run.reset()
    while not run.done:
        run.step(0.02)
    adapter = EnvAdapter(stats=frozen)
    adapter.add_day(synth_day)
    session = BridgeSession(adapter)
    session.handle_line(json.dumps({"kind": "reset", "day": synth_day.date,
                                    "start_index": 40, "horizon_s": 60}))
    for _ in range(59):
        session.handle_line('{"kind": "act", "action": 0.05}')
    assert hashlib.sha256(path.read_bytes()).hexdigest() == digest
    print("PASS determinism: byte-identical artifacts; frozen stats hash "
          "unchanged")


def test_bridge_wire_fidelity_and_stats_format(synth_day, tmp_path):
    """10,000 wire-crossed steps match in-process values within 1e-12
    relative; a stats file written externally in the documented layout
    loads in frozen mode."""
    impact = ImpactParams(k=0.003)
    fees = FeeSchedule(taker_fee=0.001)
    adapter = EnvAdapter(impact=impact, fees=fees)
    adapter.add_day(synth_day)
    session = BridgeSession(adapter)
    rng = np.random.default_rng(777)
    steps = 0
    worst = 0.0
    horizon = 1200
    while steps < 10_000:
        start = int(rng.integers(0, len(synth_day) - horizon))
        reply, _ = session.handle_line(json.dumps(
            {"kind": "reset", "day": synth_day.date, "start_index": start,
             "horizon_s": horizon}))
        env = EpisodeEnv(EpisodeConfig(synth_day, start, horizon),
                         impact=impact, fees=fees)
        ref = env.reset()
        assert reply["observation"] == [float(v) for v in ref]
        done = False
        while not done and steps < 10_000:
            a = float(rng.uniform(-1.0, 1.0))
            reply, _ = session.handle_line(json.dumps(
                {"kind": "act", "action": a}))
            res = env.step(a)
            obs_diff = np.abs(np.array(reply["observation"]) - res.observation)
            scale = np.maximum(1.0, np.abs(res.observation))
            worst = max(worst, float((obs_diff / scale).max()))
            if res.reward != 0.0:
                worst = max(worst,
                            abs(reply["reward"] - res.reward) / abs(res.reward))
            done = reply["kind"] == "done"
            steps += 1
    assert worst <= 1e-12

    # external writer: magic, <IIdQ header, then mean and var as <f8
    rng = np.random.default_rng(5)
    mean = rng.normal(0.0, 1.0, 93)
    var = rng.uniform(0.5, 2.0, 93)
    blob = (b"LOBN1" + struct.pack("<IIdQ", 1, 93, 10.0, 4096)
            + mean.astype("<f8").tobytes() + var.astype("<f8").tobytes())
    path = tmp_path / "external.lobn"
    path.write_bytes(blob)
    loaded = NormalizerStats.load(path)
    assert loaded.frozen and loaded.count == 4096
    np.testing.assert_array_equal(loaded.mean, mean)
    np.testing.assert_array_equal(loaded.var, var)
    print(f"PASS bridge fidelity: {steps} steps, worst rel diff {worst:.2e}; "
          "external stats file loads frozen")
