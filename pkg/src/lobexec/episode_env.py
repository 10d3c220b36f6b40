"""Fixed-horizon sell-only liquidation episodes over one day of snapshots.

An episode covers the snapshots whose timestamps fall in
[t_start, t_start + horizon_s). The observation at each snapshot has 93
entries: 20 bid prices / mid, 20 bid sizes, 20 ask prices / mid, 20 ask
sizes, the 11 indicators, time-to-go fraction, inventory fraction.
Decisions settle one snapshot later; the episode is done at the window's
last snapshot, so a window of H snapshots executes H - 1 steps.

Per-step reward is execution PnL against the arrival mid, normalized by
initial notional; the terminal step adds residual mark-to-market and an
inventory penalty on the fraction above target. With zero penalty the
summed rewards times 100 equal the episode's pnl_percent exactly.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import DataError, LobexecError
from .exec_engine import FeeSchedule, Fill, ImpactParams, settle_sell
from .indicators import (FLAG_BPI_CLAMP, FLAG_FIRST, FLAG_IMB_MULTI,
                         FLAG_IMB_TOP, FLAG_MICRO, FLAG_OFI, FLAG_VAMP_ASK,
                         FLAG_VAMP_BID, INDICATOR_NAMES, N_INDICATORS)
from .snapshot_store import DayBook

_FLAG_TO_NAME = (
    (FLAG_MICRO, "micro_price"), (FLAG_IMB_TOP, "imbalance_top"),
    (FLAG_IMB_MULTI, "imbalance_multi"), (FLAG_VAMP_BID, "vamp"),
    (FLAG_VAMP_ASK, "vamp"), (FLAG_OFI, "ofi"),
    (FLAG_BPI_CLAMP, "bpi"), (FLAG_FIRST, "delta_mid"),
)

OBS_SIZE = 93
_NS = 1_000_000_000

STATS_MAGIC = b"LOBN1"
STATS_VERSION = 1


@dataclass(frozen=True)
class EpisodeConfig:
    """One evaluation window over a loaded day."""

    day: DayBook
    start_index: int
    horizon_s: int
    initial_btc: float = 1.0
    target_fraction: float = 0.0
    trade_fraction: float = 0.1
    sell_only: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.initial_btc <= 0.0:
            raise ValueError("initial_btc must be > 0")
        if not 0.0 <= self.target_fraction < 1.0:
            raise ValueError("target_fraction must be in [0, 1)")
        if not 0.0 < self.trade_fraction <= 1.0:
            raise ValueError("trade_fraction must be in (0, 1]")
        if not self.sell_only:
            raise ValueError("only sell-only episodes exist")


@dataclass(frozen=True)
class RewardParams:
    """Terminal penalty weight on inventory above the target fraction."""

    inventory_penalty: float = 0.01

    def __post_init__(self) -> None:
        if not (math.isfinite(self.inventory_penalty)
                and self.inventory_penalty >= 0.0):
            raise ValueError("inventory_penalty must be finite and >= 0")


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


def episode_length(day: DayBook, start_index: int, horizon_s: int) -> int:
    """Snapshots in [t_start, t_start + horizon_s); errors if the window
    overruns the day."""
    ts = day.timestamp_ns
    n = ts.shape[0]
    if not 0 <= start_index < n:
        raise ValueError(f"start_index {start_index} outside day of {n} rows")
    t0 = int(ts[start_index])
    t_end = t0 + horizon_s * _NS
    if int(ts[-1]) < t_end - _NS:
        raise ValueError(
            f"window of {horizon_s}s starting at index {start_index} "
            f"does not fit in day {day.date}")
    end = int(np.searchsorted(ts, t_end, side="left"))
    length = end - start_index
    if length < 2:
        raise ValueError("window holds fewer than two snapshots")
    return length


class NormalizerStats:
    """Per-entry streaming mean/variance with clipped z-scoring.

    In fitting mode each observation updates the stats before being
    transformed; in frozen mode the stats are read-only. The transform is
    (x - mean) / sqrt(var + 1e-8), clipped to +-clip.
    """

    def __init__(self, n_entries: int = OBS_SIZE, clip: float = 10.0,
                 frozen: bool = False) -> None:
        self.mean = np.zeros(n_entries)
        self.var = np.ones(n_entries)
        self.count = 0
        self.clip = float(clip)
        self.frozen = bool(frozen)

    @property
    def n_entries(self) -> int:
        return int(self.mean.shape[0])

    def update(self, x: np.ndarray) -> None:
        if self.frozen:
            raise LobexecError("frozen stats cannot be updated")
        if x.shape != self.mean.shape:
            raise LobexecError(
                f"observation has {x.shape[0]} entries, stats track "
                f"{self.n_entries}")
        self.count += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        self.var = ((self.count - 1.0) * self.var + delta * (x - self.mean)) / self.count

    def transform(self, x: np.ndarray) -> np.ndarray:
        z = (x - self.mean) / np.sqrt(self.var + 1e-8)
        return np.clip(z, -self.clip, self.clip)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        if not self.frozen:
            self.update(x)
        return self.transform(x)

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(STATS_MAGIC)
            f.write(struct.pack("<IIdQ", STATS_VERSION, self.n_entries,
                                self.clip, self.count))
            f.write(self.mean.astype("<f8").tobytes())
            f.write(self.var.astype("<f8").tobytes())

    @classmethod
    def load(cls, path, frozen: bool = True) -> "NormalizerStats":
        with open(path, "rb") as f:
            magic = f.read(len(STATS_MAGIC))
            if magic != STATS_MAGIC:
                raise DataError(f"{path}: bad stats magic {magic!r}")
            version, n, clip, count = struct.unpack("<IIdQ", f.read(24))
            if version != STATS_VERSION:
                raise DataError(f"{path}: unsupported stats version {version}")
            body = f.read(2 * 8 * n)
            if len(body) != 2 * 8 * n:
                raise DataError(f"{path}: truncated stats file")
        stats = cls(n_entries=n, clip=clip, frozen=frozen)
        stats.mean = np.frombuffer(body[:8 * n], dtype="<f8").astype(np.float64)
        stats.var = np.frombuffer(body[8 * n:], dtype="<f8").astype(np.float64)
        stats.count = count
        if not np.isfinite(stats.mean).all() or (stats.var < 0.0).any():
            raise DataError(f"{path}: corrupt stats values")
        return stats


class EpisodeEnv:
    """Step/reset interface over one episode window.

    All settlement arithmetic mirrors the fused kernel episode runner
    operation-for-operation, so a full env rollout and a kernel run of the
    same action sequence produce bit-identical cash, inventory, and reward.
    """

    def __init__(self, cfg: EpisodeConfig,
                 impact: ImpactParams | None = None,
                 fees: FeeSchedule | None = None,
                 reward_params: RewardParams | None = None,
                 stats: NormalizerStats | None = None,
                 n_multi: int = 20) -> None:
        self.cfg = cfg
        self.impact = impact if impact is not None else ImpactParams()
        self.fees = fees if fees is not None else FeeSchedule()
        self.reward_params = (reward_params if reward_params is not None
                              else RewardParams())
        self.stats = stats
        self.n_multi = n_multi
        self.length = episode_length(cfg.day, cfg.start_index, cfg.horizon_s)
        self.last_index = cfg.start_index + self.length - 1
        self._started = False

    @property
    def steps(self) -> int:
        """Number of step() calls from reset to done."""
        return self.length - 1

    def reset(self) -> np.ndarray:
        cfg = self.cfg
        self._cash = 0.0
        self._inventory = cfg.initial_btc
        self._displacement = 0.0
        self._last_ts = int(cfg.day.timestamp_ns[cfg.start_index])
        day = cfg.day
        s = cfg.start_index
        self._arrival_mid = (day.bid_px[s, 0] + day.ask_px[s, 0]) * 0.5
        self._notional0 = cfg.initial_btc * self._arrival_mid
        self._i = s
        self._done = False
        self._started = True
        self._cum_reward = 0.0
        self._fills = 0
        self._final_mid = self._arrival_mid
        self.degeneracy = dict.fromkeys(INDICATOR_NAMES, 0)
        self._ind = np.empty(N_INDICATORS)
        flags, self._btot, self._atot, self._pmid, self._pvamp = \
            kernels.indicator_row(day.bid_px[s], day.bid_sz[s],
                                  day.ask_px[s], day.ask_sz[s],
                                  self.n_multi, False, 0.0, 0.0, 0.0, 0.0,
                                  self._ind)
        self._count_flags(int(flags))
        return self._observe()

    def _count_flags(self, flags: int) -> None:
        for bit, name in _FLAG_TO_NAME:
            if flags & bit:
                self.degeneracy[name] += 1

    def _observe(self) -> np.ndarray:
        day = self.cfg.day
        i = self._i
        out = np.empty(OBS_SIZE)
        time_to_go = (self.last_index - i) / (self.length - 1)
        inv_frac = self._inventory / self.cfg.initial_btc
        kernels.fill_observation(out, day.bid_px[i], day.bid_sz[i],
                                 day.ask_px[i], day.ask_sz[i],
                                 self._pmid, self._ind, time_to_go, inv_frac)
        if self.stats is not None:
            out = self.stats.normalize(out)
        return out

    def step(self, action: float) -> StepResult:
        if not self._started:
            raise LobexecError("call reset() before step()")
        if self._done:
            raise LobexecError("step() after the episode ended")
        cfg = self.cfg
        day = cfg.day

        a = float(action)
        if a < 0.0:
            a = 0.0
        elif a > cfg.trade_fraction:
            a = cfg.trade_fraction
        qty = a * self._inventory

        idx = self._i + 1
        dt_s = float(int(day.timestamp_ns[idx]) - self._last_ts) / 1e9
        if dt_s > 0.0:
            self._displacement = self._displacement * math.pow(
                2.0, -(dt_s / self.impact.half_life_s))
        self._last_ts = int(day.timestamp_ns[idx])

        mid = (day.bid_px[idx, 0] + day.ask_px[idx, 0]) * 0.5
        liquidity_ref = kernels.side_total(day.bid_sz[idx])
        filled, proceeds, levels, fee, self._displacement = settle_sell(
            day.bid_px[idx], day.bid_sz[idx], mid, qty, self._displacement,
            self.impact, self.fees, liquidity_ref)
        self._cash += proceeds - fee
        self._inventory -= filled
        if filled > 0.0:
            self._fills += 1

        reward = ((proceeds - fee) - filled * self._arrival_mid) / self._notional0
        done = idx == self.last_index
        if done:
            self._final_mid = mid
            reward += (self._inventory * mid
                       - self._inventory * self._arrival_mid) / self._notional0
            resid = self._inventory / cfg.initial_btc - cfg.target_fraction
            if resid > 0.0:
                reward -= self.reward_params.inventory_penalty * resid
        self._cum_reward += reward

        self._i = idx
        flags, self._btot, self._atot, self._pmid, self._pvamp = \
            kernels.indicator_row(day.bid_px[idx], day.bid_sz[idx],
                                  day.ask_px[idx], day.ask_sz[idx],
                                  self.n_multi, True, self._btot, self._atot,
                                  self._pmid, self._pvamp, self._ind)
        self._count_flags(int(flags))
        obs = self._observe()
        self._done = done

        avg = proceeds / filled if filled > 0.0 else 0.0
        fill = Fill(requested_qty=float(qty), filled_qty=float(filled),
                    avg_price=float(avg), fee_paid=float(fee),
                    levels_consumed=levels)
        info = {"fill": fill, "flags": int(flags), "mid": float(mid)}
        return StepResult(observation=obs, reward=float(reward),
                          done=done, info=info)

    # Completed-episode accessors used by the evaluation layer.

    @property
    def done(self) -> bool:
        return self._done

    @property
    def cash(self) -> float:
        return float(self._cash)

    @property
    def inventory(self) -> float:
        return float(self._inventory)

    @property
    def fills(self) -> int:
        return self._fills

    @property
    def cum_reward(self) -> float:
        return float(self._cum_reward)

    @property
    def arrival_mid(self) -> float:
        return float(self._arrival_mid)

    @property
    def final_mid(self) -> float:
        return float(self._final_mid)

    @property
    def residual_fraction(self) -> float:
        return float(self._inventory / self.cfg.initial_btc)


@dataclass(frozen=True)
class RunOutcome:
    """Terminal state of one completed episode."""

    initial_btc: float
    cash: float
    inventory: float
    fills: int
    cum_reward: float
    arrival_mid: float
    final_mid: float

    @property
    def residual_fraction(self) -> float:
        return self.inventory / self.initial_btc


# Plan interpretation inside the fused episode runner.
MODE_SCHEDULE = 0  # plan holds absolute child quantities
MODE_ACTIONS = 1   # plan holds raw actions, clipped to [0, trade_fraction]
MODE_ORACLE = 2    # built-in threshold rule; plan unused


def run_core(cfg: EpisodeConfig, impact: ImpactParams, fees: FeeSchedule,
             reward_params: RewardParams, mode: int,
             plan: np.ndarray | None = None,
             oracle: tuple[float, float, float] = (3.0, 0.25, 0.0)) -> RunOutcome:
    """Run one episode through the fused kernel loop.

    Bit-identical to driving EpisodeEnv with the same decisions; the env
    path exists for observation-consuming policies, this one for schedule
    and built-in runs where per-step observations are not needed.
    """
    day = cfg.day
    length = episode_length(day, cfg.start_index, cfg.horizon_s)
    steps = length - 1
    if plan is None:
        plan_arr = np.zeros(steps)
    else:
        plan_arr = np.ascontiguousarray(plan, dtype=np.float64)
        if plan_arr.shape != (steps,):
            raise ValueError(
                f"plan length {plan_arr.shape[0]} != episode steps {steps}")
    boost_up, boost_down, threshold = oracle
    cash, inventory, fills, cum_reward, arrival_mid, final_mid = \
        kernels.run_episode_core(
            day.timestamp_ns, day.bid_px, day.bid_sz, day.ask_px, day.ask_sz,
            cfg.start_index, length, cfg.initial_btc, cfg.target_fraction,
            cfg.trade_fraction, impact.k, impact.size_exponent,
            impact.half_life_s, fees.taker_fee,
            reward_params.inventory_penalty, mode, plan_arr,
            boost_up, boost_down, threshold)
    return RunOutcome(initial_btc=cfg.initial_btc, cash=float(cash),
                      inventory=float(inventory), fills=int(fills),
                      cum_reward=float(cum_reward),
                      arrival_mid=float(arrival_mid),
                      final_mid=float(final_mid))
