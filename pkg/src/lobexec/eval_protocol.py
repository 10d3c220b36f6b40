"""Per-day evaluation: k intra-day starts, paired method runs, daily gaps.

Every (day, start, horizon) cell runs the policy under test plus both
baselines on identical windows and engine parameters. Per-episode rows
aggregate to one score per (day, method); statistical inference happens
on the per-day paired differences only, never on episode rows, which
keeps within-day repeats from inflating the sample size.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .episode_env import EpisodeConfig, FeeSchedule, ImpactParams, RewardParams, RunOutcome
from .errors import DataError
from .policies import OracleParams, day_key, run_policy
from .snapshot_store import DayBook

EPISODE_COLUMNS = ["day", "episode_id", "start_index", "horizon_s", "method",
                   "pnl_percent", "cum_reward", "fills", "residual_fraction"]
DAILY_COLUMNS = ["day", "horizon_s", "rl", "twap", "vwap", "gap_twap", "gap_vwap"]
METHODS = ("RL", "TWAP", "VWAP")
BASELINES = ("TWAP", "VWAP")


@dataclass(frozen=True)
class EpisodeResult:
    """One (day, episode, method) evaluation cell."""

    day: str
    episode_id: int
    start_index: int
    horizon_s: int
    method: str
    pnl_percent: float
    cum_reward: float
    fills: int
    residual_fraction: float


@dataclass(frozen=True)
class DailyGapSeries:
    """Paired per-day differences policy - baseline for one horizon."""

    horizon_s: int
    baseline: str
    days: tuple[str, ...]
    gaps: np.ndarray

    def __post_init__(self) -> None:
        if len(self.days) != self.gaps.shape[0]:
            raise ValueError("days and gaps must align")
        if list(self.days) != sorted(self.days):
            raise ValueError("days must be sorted")


def pnl_percent(outcome: RunOutcome) -> float:
    """100 x (terminal wealth - arrival notional) / arrival notional,
    marked at the last window tick's unshifted mid."""
    notional0 = outcome.initial_btc * outcome.arrival_mid
    wealth = outcome.cash + outcome.inventory * outcome.final_mid
    return 100.0 * (wealth - notional0) / notional0


def select_starts(day: DayBook, horizon_s: int, k: int = 10, seed: int = 0,
                  jitter: bool = False) -> list[int]:
    """k distinct start indices whose windows fit within the day.

    Default placement is evenly spaced: floor(i * (n - H) / k). With
    jitter=True each start moves by a seeded uniform offset within its
    stride; both modes are deterministic given (day, horizon, k, seed).
    Snapshots are at 1 s cadence, so a horizon of H seconds spans H rows.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    n = len(day)
    span = n - horizon_s
    if span < 0:
        raise DataError(
            f"day {day.date} has {n} snapshots, shorter than horizon {horizon_s}")
    starts = [i * span // k for i in range(k)]
    if jitter:
        rng = np.random.default_rng(
            np.random.SeedSequence([seed, day_key(day.date), horizon_s, k]))
        stride = max(1, span // k)
        offsets = rng.integers(0, stride, size=k)
        starts = [min(span, s + int(o)) for s, o in zip(starts, offsets)]
    if len(set(starts)) != k:
        raise DataError(
            f"day {day.date} too short for {k} distinct starts at horizon {horizon_s}")
    return starts


def run_day(day: DayBook, horizon_s: int, policy: str = "oracle",
            k: int = 10, seed: int = 0, jitter: bool = False,
            impact: ImpactParams | None = None,
            fees: FeeSchedule | None = None,
            reward_params: RewardParams | None = None,
            initial_btc: float = 1.0, target_fraction: float = 0.0,
            trade_fraction: float = 0.1,
            oracle: OracleParams | None = None) -> list[EpisodeResult]:
    """3k rows: the policy (reported as RL) plus TWAP and VWAP per start."""
    impact = impact if impact is not None else ImpactParams()
    fees = fees if fees is not None else FeeSchedule()
    reward_params = reward_params if reward_params is not None else RewardParams()
    starts = select_starts(day, horizon_s, k=k, seed=seed, jitter=jitter)
    rows: list[EpisodeResult] = []
    for episode_id, start in enumerate(starts):
        cfg = EpisodeConfig(day=day, start_index=start, horizon_s=horizon_s,
                            initial_btc=initial_btc,
                            target_fraction=target_fraction,
                            trade_fraction=trade_fraction, seed=seed)
        for method, runner in (("RL", policy), ("TWAP", "twap"), ("VWAP", "vwap")):
            out = run_policy(runner, cfg, impact, fees, reward_params, oracle)
            rows.append(EpisodeResult(
                day=day.date, episode_id=episode_id, start_index=start,
                horizon_s=horizon_s, method=method,
                pnl_percent=pnl_percent(out), cum_reward=out.cum_reward,
                fills=out.fills, residual_fraction=out.residual_fraction))
    return rows


def results_frame(rows: list[EpisodeResult]) -> pd.DataFrame:
    """Episode rows as a DataFrame in canonical column and sort order."""
    df = pd.DataFrame([r.__dict__ for r in rows], columns=EPISODE_COLUMNS)
    return df.sort_values(["day", "episode_id", "method"]).reset_index(drop=True)


def aggregate_daily(frame: pd.DataFrame, statistic: str = "mean") -> pd.DataFrame:
    """One score per (day, horizon, method) plus paired gap columns.

    statistic picks the within-day aggregator over the k starts. Every
    (day, horizon) must carry all three methods; partial days are an
    error, never silently dropped.
    """
    if statistic not in ("mean", "median"):
        raise ValueError("statistic must be 'mean' or 'median'")
    required = set(EPISODE_COLUMNS)
    if not required.issubset(frame.columns):
        raise DataError(f"episode frame missing columns {required - set(frame.columns)}")
    agg = (frame.groupby(["day", "horizon_s", "method"])["pnl_percent"]
           .agg(statistic).unstack("method"))
    missing = agg.index[agg.isna().any(axis=1)]
    if len(missing) or not set(METHODS).issubset(agg.columns):
        raise DataError(f"incomplete method rows for days {list(missing)}")
    daily = agg.reset_index().rename(
        columns={"RL": "rl", "TWAP": "twap", "VWAP": "vwap"})
    daily.columns.name = None
    daily["gap_twap"] = daily["rl"] - daily["twap"]
    daily["gap_vwap"] = daily["rl"] - daily["vwap"]
    daily = daily[DAILY_COLUMNS].sort_values(["horizon_s", "day"])
    return daily.reset_index(drop=True)


def gap_series(daily: pd.DataFrame) -> list[DailyGapSeries]:
    """Per-(horizon, baseline) paired gap series from the daily table."""
    out: list[DailyGapSeries] = []
    for horizon_s, sub in daily.groupby("horizon_s"):
        sub = sub.sort_values("day")
        days = tuple(str(d) for d in sub["day"])
        for baseline, col in (("TWAP", "gap_twap"), ("VWAP", "gap_vwap")):
            out.append(DailyGapSeries(
                horizon_s=int(horizon_s), baseline=baseline, days=days,
                gaps=sub[col].to_numpy(dtype=np.float64)))
    return out


def episode_csv_name(horizon_s: int, k: int) -> str:
    return f"episodes_h{horizon_s}_k{k}.csv"


def daily_csv_name(horizon_s: int, k: int) -> str:
    return f"daily_h{horizon_s}_k{k}.csv"


def _repr_float(v) -> str:
    # Shortest string that parses back to the exact same double.
    return repr(float(v))


def write_episode_csv(frame: pd.DataFrame, out_dir, horizon_s: int, k: int) -> Path:
    path = Path(out_dir) / episode_csv_name(horizon_s, k)
    frame.to_csv(path, index=False, float_format=_repr_float)
    return path


def write_daily_csv(daily: pd.DataFrame, out_dir, horizon_s: int, k: int) -> Path:
    path = Path(out_dir) / daily_csv_name(horizon_s, k)
    daily.to_csv(path, index=False, float_format=_repr_float)
    return path


def read_episode_csv(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"day": str}, float_precision="round_trip")
    if list(df.columns) != EPISODE_COLUMNS:
        raise DataError(f"{path}: unexpected episode CSV columns {list(df.columns)}")
    return df


def read_daily_csv(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"day": str}, float_precision="round_trip")
    if list(df.columns) != DAILY_COLUMNS:
        raise DataError(f"{path}: unexpected daily CSV columns {list(df.columns)}")
    return df
