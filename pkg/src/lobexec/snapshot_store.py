"""Load, validate, and serve time-ordered depth-20 order book snapshots.

One file holds one calendar day. Canonical layouts:

CSV   header ``timestamp_ns,bid_px_0..bid_px_19,bid_sz_0..bid_sz_19,
      ask_px_0..ask_px_19,ask_sz_0..ask_sz_19`` (81 columns), UTF-8,
      ``.`` decimal, one row per snapshot.
LOBD  magic ``LOBD1``, then little-endian records of u64 timestamp_ns
      followed by 80 f64 in the same column order as the CSV.

File names are ``YYYYMMDD.csv`` or ``YYYYMMDD.lobd``.
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError

N_LEVELS = 20
BINARY_MAGIC = b"LOBD1"
_RECORD = np.dtype([("ts", "<u8"), ("vals", "<f8", (4 * N_LEVELS,))])

COLUMNS = (
    ["timestamp_ns"]
    + [f"bid_px_{i}" for i in range(N_LEVELS)]
    + [f"bid_sz_{i}" for i in range(N_LEVELS)]
    + [f"ask_px_{i}" for i in range(N_LEVELS)]
    + [f"ask_sz_{i}" for i in range(N_LEVELS)]
)

# Rows whose mid leaves [running_median/10, running_median*10] are dropped.
OUTLIER_BAND = 10.0


@dataclass(frozen=True)
class BookLevel:
    """One price level; size 0 encodes an absent (forward-filled) level."""

    price: float
    size: float


@dataclass(frozen=True)
class Snapshot:
    """One timestamped two-sided depth-20 book, best level first."""

    timestamp_ns: int
    bids: tuple[BookLevel, ...]
    asks: tuple[BookLevel, ...]

    @property
    def best_bid(self) -> float:
        return self.bids[0].price

    @property
    def best_ask(self) -> float:
        return self.asks[0].price


@dataclass
class QualityReport:
    """Filtering counters; rows_in reconciles exactly with rows kept."""

    rows_in: int = 0
    rows_dropped_duplicate_ts: int = 0
    rows_dropped_invalid_top: int = 0
    rows_dropped_nonpositive_spread: int = 0
    values_clipped: int = 0

    @property
    def rows_dropped(self) -> int:
        return (self.rows_dropped_duplicate_ts
                + self.rows_dropped_invalid_top
                + self.rows_dropped_nonpositive_spread)


@dataclass
class DayBook:
    """Immutable filtered day of snapshots, stored column-wise.

    Arrays are row-aligned: ``timestamp_ns`` has shape (n,), the four
    ladder matrices (n, 20) with level 0 best. Timestamps are strictly
    increasing.
    """

    date: str
    timestamp_ns: np.ndarray
    bid_px: np.ndarray
    bid_sz: np.ndarray
    ask_px: np.ndarray
    ask_sz: np.ndarray

    def __len__(self) -> int:
        return int(self.timestamp_ns.shape[0])

    def snapshot(self, i: int) -> Snapshot:
        bids = tuple(BookLevel(float(p), float(s))
                     for p, s in zip(self.bid_px[i], self.bid_sz[i]))
        asks = tuple(BookLevel(float(p), float(s))
                     for p, s in zip(self.ask_px[i], self.ask_sz[i]))
        return Snapshot(int(self.timestamp_ns[i]), bids, asks)

    def mids(self) -> np.ndarray:
        return (self.bid_px[:, 0] + self.ask_px[:, 0]) * 0.5


def mid_price(s: Snapshot) -> float:
    """Arithmetic mean of best bid and best ask."""
    return (s.best_bid + s.best_ask) * 0.5


def index_at_or_after(day: DayBook, t: int) -> int:
    """Smallest index i with timestamp_ns[i] >= t."""
    if t > int(day.timestamp_ns[-1]):
        raise ValueError(f"timestamp {t} is beyond the end of day {day.date}")
    return int(np.searchsorted(day.timestamp_ns, t, side="left"))


def forward_fill_levels(px, sz):
    """Normalize one raw ladder to 20 levels.

    A level is present when its price is finite and positive and its size
    is finite and positive. Absent levels get size 0 and repeat the last
    present price, which preserves ladder monotonicity for sized levels.
    Level 1 must be present.
    """
    px = np.asarray(px, dtype=np.float64)
    sz = np.asarray(sz, dtype=np.float64)
    out_px = np.full(N_LEVELS, np.nan)
    out_sz = np.zeros(N_LEVELS)
    n = min(px.shape[0], N_LEVELS)
    out_px[:n] = px[:n]
    out_sz[:n] = sz[:n]
    fpx, fsz, ok = _forward_fill(out_px[None, :], out_sz[None, :])
    if not ok[0]:
        raise DataError("ladder has no present top level")
    return fpx[0], fsz[0]


def _forward_fill(px: np.ndarray, sz: np.ndarray):
    """Vectorized per-side fill. Returns (filled_px, filled_sz, top_ok)."""
    present = (np.isfinite(px) & (px > 0.0) & np.isfinite(sz) & (sz > 0.0))
    n = px.shape[0]
    idx = np.where(present, np.arange(N_LEVELS)[None, :], -1)
    last = np.maximum.accumulate(idx, axis=1)
    top_ok = last[:, 0] >= 0
    safe = np.maximum(last, 0)
    filled_px = px[np.arange(n)[:, None], safe]
    filled_sz = np.where(present, sz, 0.0)
    return filled_px, filled_sz, top_ok


def _ladder_ok(filled_px: np.ndarray, present: np.ndarray, side: str) -> np.ndarray:
    """Strict price monotonicity over sized levels (fill exempts size-0)."""
    d = filled_px[:, 1:] - filled_px[:, :-1]
    later = present[:, 1:]
    if side == "bid":
        bad = (d > 0.0) | ((d == 0.0) & later)
    else:
        bad = (d < 0.0) | ((d == 0.0) & later)
    return ~bad.any(axis=1)


class _RunningMedian:
    """Streaming median over floats via the usual two-heap split."""

    def __init__(self) -> None:
        self._lo: list[float] = []  # max-heap (negated)
        self._hi: list[float] = []  # min-heap

    def push(self, x: float) -> None:
        if not self._lo or x <= -self._lo[0]:
            heapq.heappush(self._lo, -x)
        else:
            heapq.heappush(self._hi, x)
        if len(self._lo) > len(self._hi) + 1:
            heapq.heappush(self._hi, -heapq.heappop(self._lo))
        elif len(self._hi) > len(self._lo):
            heapq.heappush(self._lo, -heapq.heappop(self._hi))

    def value(self) -> float:
        if len(self._lo) > len(self._hi):
            return -self._lo[0]
        return (-self._lo[0] + self._hi[0]) * 0.5


def _repr_float(v) -> str:
    # Shortest string that parses back to the exact same double.
    return repr(float(v))


def _parse_csv(path: Path):
    df = pd.read_csv(path, float_precision="round_trip")
    if list(df.columns) != COLUMNS:
        raise DataError(
            f"{path.name}: expected {len(COLUMNS)} canonical columns, "
            f"got {len(df.columns)}")
    ts = df["timestamp_ns"].to_numpy(dtype=np.int64)
    vals = df[COLUMNS[1:]].to_numpy(dtype=np.float64)
    return ts, vals


def _parse_binary(path: Path):
    with open(path, "rb") as f:
        magic = f.read(len(BINARY_MAGIC))
        if magic != BINARY_MAGIC:
            raise DataError(f"{path.name}: bad magic {magic!r}")
        payload = f.read()
    if len(payload) % _RECORD.itemsize != 0:
        raise DataError(f"{path.name}: truncated record payload")
    rec = np.frombuffer(payload, dtype=_RECORD)
    ts = rec["ts"].astype(np.int64)
    vals = np.ascontiguousarray(rec["vals"], dtype=np.float64)
    return ts, vals


def _date_from_name(path: Path) -> str:
    m = re.fullmatch(r"(\d{8})", path.stem)
    return m.group(1) if m else path.stem


def detect_format(path: Path) -> str:
    suffix = path.suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix == ".lobd":
        return "binary"
    raise DataError(f"{path.name}: cannot infer format from extension")


def load_day(path, format: str | None = None):
    """Load one day file and apply the quality filters.

    Pipeline: parse, clip negative sizes to 0, drop duplicate timestamps
    (first occurrence wins), sort by timestamp, drop rows with an absent
    or invalid top of book or a broken ladder, drop rows with
    best_ask <= best_bid, drop rows whose mid strays beyond a 10x band
    around the running median mid. Returns (DayBook, QualityReport).
    """
    path = Path(path)
    fmt = format or detect_format(path)
    try:
        if fmt == "csv":
            ts, vals = _parse_csv(path)
        elif fmt == "binary":
            ts, vals = _parse_binary(path)
        else:
            raise DataError(f"unknown format {fmt!r}")
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc

    report = QualityReport(rows_in=int(ts.shape[0]))
    if ts.shape[0] == 0:
        raise DataError(f"{path.name}: no rows")

    bpx = vals[:, 0:N_LEVELS].copy()
    bsz = vals[:, N_LEVELS:2 * N_LEVELS].copy()
    apx = vals[:, 2 * N_LEVELS:3 * N_LEVELS].copy()
    asz = vals[:, 3 * N_LEVELS:4 * N_LEVELS].copy()

    for sz in (bsz, asz):
        neg = np.isfinite(sz) & (sz < 0.0)
        report.values_clipped += int(neg.sum())
        sz[neg] = 0.0

    # dedupe keeps the first occurrence in file order, then sort by time
    _, first = np.unique(ts, return_index=True)
    if first.shape[0] != ts.shape[0]:
        report.rows_dropped_duplicate_ts = int(ts.shape[0] - first.shape[0])
    keep = np.sort(first)
    order = keep[np.argsort(ts[keep], kind="stable")]
    ts, bpx, bsz, apx, asz = (a[order] for a in (ts, bpx, bsz, apx, asz))

    bid_present = (np.isfinite(bpx) & (bpx > 0.0)
                   & np.isfinite(bsz) & (bsz > 0.0))
    ask_present = (np.isfinite(apx) & (apx > 0.0)
                   & np.isfinite(asz) & (asz > 0.0))
    fb_px, fb_sz, b_ok = _forward_fill(bpx, bsz)
    fa_px, fa_sz, a_ok = _forward_fill(apx, asz)

    valid = (b_ok & a_ok
             & _ladder_ok(fb_px, bid_present, "bid")
             & _ladder_ok(fa_px, ask_present, "ask"))
    report.rows_dropped_invalid_top = int((~valid).sum())

    spread_ok = fa_px[:, 0] > fb_px[:, 0]
    report.rows_dropped_nonpositive_spread = int((valid & ~spread_ok).sum())
    valid &= spread_ok

    ts, fb_px, fb_sz, fa_px, fa_sz = (
        a[valid] for a in (ts, fb_px, fb_sz, fa_px, fa_sz))

    # sequential sanity band around the running median mid
    mids = (fb_px[:, 0] + fa_px[:, 0]) * 0.5
    med = _RunningMedian()
    keep_mask = np.ones(ts.shape[0], dtype=bool)
    for i, m in enumerate(mids):
        if med._lo or med._hi:
            center = med.value()
            if m < center / OUTLIER_BAND or m > center * OUTLIER_BAND:
                keep_mask[i] = False
                continue
        med.push(float(m))
    report.rows_dropped_invalid_top += int((~keep_mask).sum())

    ts, fb_px, fb_sz, fa_px, fa_sz = (
        a[keep_mask] for a in (ts, fb_px, fb_sz, fa_px, fa_sz))
    if ts.shape[0] == 0:
        raise DataError(f"{path.name}: no rows survive the quality filters")

    day = DayBook(
        date=_date_from_name(path),
        timestamp_ns=np.ascontiguousarray(ts, dtype=np.int64),
        bid_px=np.ascontiguousarray(fb_px),
        bid_sz=np.ascontiguousarray(fb_sz),
        ask_px=np.ascontiguousarray(fa_px),
        ask_sz=np.ascontiguousarray(fa_sz),
    )
    return day, report


def write_day(day: DayBook, path, format: str | None = None) -> None:
    """Write a DayBook back out in the canonical CSV or binary layout."""
    path = Path(path)
    fmt = format or detect_format(path)
    if fmt == "csv":
        df = pd.DataFrame({"timestamp_ns": day.timestamp_ns})
        for j in range(N_LEVELS):
            df[f"bid_px_{j}"] = day.bid_px[:, j]
        for j in range(N_LEVELS):
            df[f"bid_sz_{j}"] = day.bid_sz[:, j]
        for j in range(N_LEVELS):
            df[f"ask_px_{j}"] = day.ask_px[:, j]
        for j in range(N_LEVELS):
            df[f"ask_sz_{j}"] = day.ask_sz[:, j]
        df.to_csv(path, index=False, float_format=_repr_float)
    elif fmt == "binary":
        rec = np.empty(len(day), dtype=_RECORD)
        rec["ts"] = day.timestamp_ns.astype(np.uint64)
        rec["vals"][:, 0:N_LEVELS] = day.bid_px
        rec["vals"][:, N_LEVELS:2 * N_LEVELS] = day.bid_sz
        rec["vals"][:, 2 * N_LEVELS:3 * N_LEVELS] = day.ask_px
        rec["vals"][:, 3 * N_LEVELS:4 * N_LEVELS] = day.ask_sz
        with open(path, "wb") as f:
            f.write(BINARY_MAGIC)
            f.write(rec.tobytes())
    else:
        raise DataError(f"unknown format {fmt!r}")


def list_days(directory) -> list[Path]:
    """Day files under a directory, sorted by date; binary wins over CSV."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"not a data directory: {directory}")
    by_date: dict[str, Path] = {}
    for p in sorted(directory.iterdir()):
        if not p.is_file() or not re.fullmatch(r"\d{8}", p.stem):
            continue
        if p.suffix.lower() == ".lobd":
            by_date[p.stem] = p
        elif p.suffix.lower() == ".csv":
            by_date.setdefault(p.stem, p)
    return [by_date[d] for d in sorted(by_date)]
