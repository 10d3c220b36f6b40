"""Built-in policies for the evaluation's RL slot.

`oracle` is a threshold rule used by the end-to-end tests: it paces the
remaining inventory over the remaining steps and sells faster right after
an up-tick of the decision-snapshot mid (selling into local strength pays
off on mean-reverting prices). `random` draws uniform actions in [-1, 1];
negative proposals clip to hold. Both are deterministic given the seed.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .baselines import build_schedule, run_schedule
from .episode_env import (MODE_ACTIONS, MODE_ORACLE, EpisodeConfig,
                          FeeSchedule, ImpactParams, RewardParams,
                          RunOutcome, episode_length, run_core)

POLICY_NAMES = ("oracle", "random", "twap", "vwap")


@dataclass(frozen=True)
class OracleParams:
    """Sell-pace multipliers around the delta-mid threshold."""

    boost_up: float = 3.0
    boost_down: float = 0.25
    threshold: float = 0.0


def day_key(date: str) -> int:
    """Stable integer for a day identifier, for seed derivation."""
    try:
        return int(date)
    except ValueError:
        return zlib.crc32(date.encode("utf-8"))


def random_actions(steps: int, seed: int, date: str, start_index: int) -> np.ndarray:
    """Uniform [-1, 1] actions, deterministic per (seed, day, start)."""
    rng = np.random.default_rng(
        np.random.SeedSequence([seed, day_key(date), start_index]))
    return rng.uniform(-1.0, 1.0, size=steps)


def run_policy(name: str, cfg: EpisodeConfig, impact: ImpactParams,
               fees: FeeSchedule, reward_params: RewardParams,
               oracle: OracleParams | None = None) -> RunOutcome:
    """Run one episode under a named built-in policy."""
    if name == "oracle":
        p = oracle if oracle is not None else OracleParams()
        return run_core(cfg, impact, fees, reward_params, MODE_ORACLE,
                        oracle=(p.boost_up, p.boost_down, p.threshold))
    if name == "random":
        steps = episode_length(cfg.day, cfg.start_index, cfg.horizon_s) - 1
        plan = random_actions(steps, cfg.seed, cfg.day.date, cfg.start_index)
        return run_core(cfg, impact, fees, reward_params, MODE_ACTIONS,
                        plan=plan)
    if name in ("twap", "vwap"):
        schedule = build_schedule(name, cfg)
        return run_schedule(schedule, cfg, impact, fees, reward_params)
    raise ValueError(f"unknown policy {name!r}; expected one of {POLICY_NAMES}")
