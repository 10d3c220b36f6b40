"""Schedule-based executors: TWAP and a book-weighted VWAP-like plan.

Schedules are pre-committed child-quantity plans over the episode's
decision steps. They run through the identical engine path (latency,
fees, impact) as any policy; unfilled remainders are not rolled over.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .episode_env import (MODE_SCHEDULE, EpisodeConfig, FeeSchedule,
                          ImpactParams, RewardParams, RunOutcome,
                          episode_length, run_core)
from .snapshot_store import DayBook


@dataclass(frozen=True)
class Schedule:
    """Per-step child quantities summing to the liquidation target."""

    quantities: np.ndarray
    target: float
    uniform_fallback: bool = False

    def __len__(self) -> int:
        return int(self.quantities.shape[0])


def twap_schedule(target: float, n_steps: int) -> Schedule:
    """Equal child quantity target/n_steps at every step."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if target < 0.0:
        raise ValueError("target must be >= 0")
    return Schedule(np.full(n_steps, target / n_steps), target)


def vwap_like_schedule(day: DayBook, start_index: int, n_steps: int,
                       target: float, levels: int = 20) -> Schedule:
    """Allocation proportional to displayed bid-side liquidity.

    The weight at step t is the summed bid size over the first `levels`
    levels of decision snapshot start_index + t (no look-ahead beyond the
    window's own snapshots); a zero-size snapshot falls back to its bid
    notional divided by mid. All-zero weights degenerate to uniform.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not 1 <= levels <= 20:
        raise ValueError("levels must be in [1, 20]")
    w = np.empty(n_steps)
    for t in range(n_steps):
        i = start_index + t
        sizes = day.bid_sz[i, :levels]
        wt = float(sizes.sum())
        if wt <= 0.0:
            mid = (day.bid_px[i, 0] + day.ask_px[i, 0]) * 0.5
            wt = float((sizes * day.bid_px[i, :levels]).sum()) / mid
        w[t] = wt
    total = float(w.sum())
    if total <= 0.0:
        return Schedule(np.full(n_steps, target / n_steps), target,
                        uniform_fallback=True)
    return Schedule(target * w / total, target)


def run_schedule(schedule: Schedule, cfg: EpisodeConfig,
                 impact: ImpactParams, fees: FeeSchedule,
                 reward_params: RewardParams) -> RunOutcome:
    """Submit each child quantity as a market sell through the engine."""
    steps = episode_length(cfg.day, cfg.start_index, cfg.horizon_s) - 1
    if len(schedule) != steps:
        raise ValueError(
            f"schedule length {len(schedule)} != episode steps {steps}")
    return run_core(cfg, impact, fees, reward_params, MODE_SCHEDULE,
                    plan=schedule.quantities)


def liquidation_target(cfg: EpisodeConfig) -> float:
    """BTC the schedules must sell: (1 - target_fraction) * initial."""
    return (1.0 - cfg.target_fraction) * cfg.initial_btc


def build_schedule(kind: str, cfg: EpisodeConfig) -> Schedule:
    """TWAP or VWAP-like schedule sized to the episode's steps."""
    steps = episode_length(cfg.day, cfg.start_index, cfg.horizon_s) - 1
    target = liquidation_target(cfg)
    if kind == "twap":
        return twap_schedule(target, steps)
    if kind == "vwap":
        return vwap_like_schedule(cfg.day, cfg.start_index, steps, target)
    raise ValueError(f"unknown schedule kind {kind!r}")
