"""Synthetic order book days for tests, benchmarks, and demos.

Days are generated from a mean-reverting mid with noisy but strictly
monotone ladders and depth dips correlated with recent price moves
(bid depth thins after drops, ask depth after rallies). Every generated
row passes the loader's quality filters unchanged, and generation is
deterministic per (seed, date).
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .snapshot_store import DayBook, N_LEVELS, write_day

_NS = 1_000_000_000


def _day_start_ns(date: str, start_hour: int) -> int:
    base = datetime.strptime(date, "%Y%m%d").replace(tzinfo=timezone.utc)
    return int(base.timestamp()) * _NS + start_hour * 3600 * _NS


def make_day(date: str, seed: int = 7, n_snapshots: int = 10800,
             mid0: float = 30000.0, theta: float = 0.02, sigma: float = 3.0,
             start_hour: int = 9) -> DayBook:
    """One synthetic day at 1 s cadence.

    The mid follows x_{t+1} = (1 - theta) x_t + sigma eps_t around mid0;
    ladders use uniformly jittered level gaps and lognormal sizes.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, int(date)]))
    n = n_snapshots

    eps = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = 0.0
    decay = 1.0 - theta
    for t in range(1, n):
        x[t] = decay * x[t - 1] + sigma * eps[t]
    mids = mid0 + x

    half_spread = 1.0 + 0.3 * rng.random(n)
    bid_gaps = 0.5 + rng.random((n, N_LEVELS - 1))
    ask_gaps = 0.5 + rng.random((n, N_LEVELS - 1))
    bid_px = np.empty((n, N_LEVELS))
    ask_px = np.empty((n, N_LEVELS))
    bid_px[:, 0] = mids - half_spread
    ask_px[:, 0] = mids + half_spread
    bid_px[:, 1:] = bid_px[:, :1] - np.cumsum(bid_gaps, axis=1)
    ask_px[:, 1:] = ask_px[:, :1] + np.cumsum(ask_gaps, axis=1)

    # depth dips trail the 30 s price move: sells into weakness find less
    r30 = np.zeros(n)
    r30[30:] = mids[30:] - mids[:-30]
    bid_dip = np.where(r30 < -4.0, 0.45, 1.0)
    ask_dip = np.where(r30 > 4.0, 0.45, 1.0)
    bid_sz = rng.lognormal(-0.7, 0.5, (n, N_LEVELS)) * bid_dip[:, None]
    ask_sz = rng.lognormal(-0.7, 0.5, (n, N_LEVELS)) * ask_dip[:, None]
    np.clip(bid_sz, 0.01, None, out=bid_sz)
    np.clip(ask_sz, 0.01, None, out=ask_sz)

    ts = _day_start_ns(date, start_hour) + np.arange(n, dtype=np.int64) * _NS
    return DayBook(date=date, timestamp_ns=ts,
                   bid_px=np.ascontiguousarray(bid_px),
                   bid_sz=np.ascontiguousarray(bid_sz),
                   ask_px=np.ascontiguousarray(ask_px),
                   ask_sz=np.ascontiguousarray(ask_sz))


def make_flat_day(date: str = "20200101", n_snapshots: int = 7300,
                  mid: float = 100.0, half_spread: float = 1e-10,
                  top_size: float = 1e9, start_hour: int = 9) -> DayBook:
    """Constant book with a hairline spread and effectively infinite top
    depth; the zero-friction reference surface."""
    n = n_snapshots
    bid_px = np.empty((n, N_LEVELS))
    ask_px = np.empty((n, N_LEVELS))
    bid_px[:] = mid - half_spread - 0.01 * np.arange(N_LEVELS)
    ask_px[:] = mid + half_spread + 0.01 * np.arange(N_LEVELS)
    bid_sz = np.ones((n, N_LEVELS))
    ask_sz = np.ones((n, N_LEVELS))
    bid_sz[:, 0] = top_size
    ask_sz[:, 0] = top_size
    ts = _day_start_ns(date, start_hour) + np.arange(n, dtype=np.int64) * _NS
    return DayBook(date=date, timestamp_ns=ts,
                   bid_px=np.ascontiguousarray(bid_px),
                   bid_sz=np.ascontiguousarray(bid_sz),
                   ask_px=np.ascontiguousarray(ask_px),
                   ask_sz=np.ascontiguousarray(ask_sz))


def month_dates(start_date: str = "20200201", n_days: int = 28) -> list[str]:
    d0 = datetime.strptime(start_date, "%Y%m%d")
    return [(d0 + timedelta(days=i)).strftime("%Y%m%d") for i in range(n_days)]


def write_month(out_dir, start_date: str = "20200201", n_days: int = 28,
                missing_index: int | None = 15, seed: int = 7,
                format: str = "binary", n_snapshots: int = 10800,
                **day_kwargs) -> tuple[list[Path], list[str]]:
    """Write a month of day files, optionally holding one day out.

    Returns (written paths, skipped dates). The held-out day mimics a
    missing data day; downstream runs must tolerate and log it.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix = ".lobd" if format == "binary" else ".csv"
    written: list[Path] = []
    skipped: list[str] = []
    for i, date in enumerate(month_dates(start_date, n_days)):
        if missing_index is not None and i == missing_index:
            skipped.append(date)
            continue
        day = make_day(date, seed=seed, n_snapshots=n_snapshots, **day_kwargs)
        path = out_dir / f"{date}{suffix}"
        write_day(day, path, format=format)
        written.append(path)
    return written, skipped
