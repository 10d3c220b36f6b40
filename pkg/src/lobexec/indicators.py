"""Microstructure indicators computed from one or two consecutive snapshots.

Eleven indicators in fixed column order (this order is the export and
observation layout):

    micro_price, imbalance_top, imbalance_multi, spread_norm,
    depth_bid, depth_ask, vamp, ofi, bpi, delta_mid, delta_vamp

The scalar functions below are the readable reference forms. The fused
per-row path (`compute_day`, and the episode loop) goes through the kernel
backend; a parity test pins the two routes together.
"""

from __future__ import annotations

import numpy as np

from ._backend import kernels
from .snapshot_store import DayBook, Snapshot

INDICATOR_NAMES = (
    "micro_price",
    "imbalance_top",
    "imbalance_multi",
    "spread_norm",
    "depth_bid",
    "depth_ask",
    "vamp",
    "ofi",
    "bpi",
    "delta_mid",
    "delta_vamp",
)
N_INDICATORS = len(INDICATOR_NAMES)

# Degeneracy flag bits, one per neutral fallback. Mirror the kernels.
FLAG_MICRO = 1
FLAG_IMB_TOP = 2
FLAG_IMB_MULTI = 4
FLAG_VAMP_BID = 8
FLAG_VAMP_ASK = 16
FLAG_OFI = 32
FLAG_BPI_CLAMP = 64
FLAG_FIRST = 128

BPI_CLAMP = (1e-6, 1e6)


def _sides(s: Snapshot):
    bpx = np.array([lv.price for lv in s.bids])
    bsz = np.array([lv.size for lv in s.bids])
    apx = np.array([lv.price for lv in s.asks])
    asz = np.array([lv.size for lv in s.asks])
    return bpx, bsz, apx, asz


def micro_price(s: Snapshot) -> float:
    """Size-weighted top-of-book price; falls back to mid when both
    top sizes are zero."""
    qb, qa = s.bids[0].size, s.asks[0].size
    pb, pa = s.bids[0].price, s.asks[0].price
    if qb + qa <= 0.0:
        return (pb + pa) * 0.5
    return (pa * qb + pb * qa) / (qb + qa)

def imbalance_top(s: Snapshot) -> float:
    """(Q_bid - Q_ask)/(Q_bid + Q_ask) at the best level; 0 when empty."""
    qb, qa = s.bids[0].size, s.asks[0].size
    if qb + qa <= 0.0:
        return 0.0
    return (qb - qa) / (qb + qa)


def imbalance_multi(s: Snapshot, n: int = 20) -> float:
    """Imbalance of summed sizes over the first n levels per side."""
    if not 1 <= n <= 20:
        raise ValueError("n must be in [1, 20]")
    qb = sum(lv.size for lv in s.bids[:n])
    qa = sum(lv.size for lv in s.asks[:n])
    if qb + qa <= 0.0:
        return 0.0
    return (qb - qa) / (qb + qa)


def spread_norm(s: Snapshot) -> float:
    """Quoted spread as a percentage of mid."""
    mid = (s.best_bid + s.best_ask) * 0.5
    return (s.best_ask - s.best_bid) / mid * 100.0


def depths(s: Snapshot) -> tuple[float, float]:
    """Per-side sum of size*price over all 20 levels, in quote currency."""
    db = sum(lv.size * lv.price for lv in s.bids)
    da = sum(lv.size * lv.price for lv in s.asks)
    return float(db), float(da)


def vamp(s: Snapshot) -> float:
    """Mean of the two per-side size-weighted mean prices.

    A side with zero total size degenerates to its best price.
    """
    bpx, bsz, apx, asz = _sides(s)
    tb, ta = float(bsz.sum()), float(asz.sum())
    bid_mean = float((bsz * bpx).sum() / tb) if tb > 0.0 else float(bpx[0])
    ask_mean = float((asz * apx).sum() / ta) if ta > 0.0 else float(apx[0])
    return (ask_mean + bid_mean) * 0.5


def ofi(prev: Snapshot, cur: Snapshot) -> float:
    """Liquidity-flow imbalance between consecutive snapshots.

    Uses top-20 summed sizes per side. Zero denominator gives 0; the
    ratio is clamped into [-1, 1] (mixed-sign flows can escape it).
    """
    dqb = sum(lv.size for lv in cur.bids) - sum(lv.size for lv in prev.bids)
    dqa = sum(lv.size for lv in cur.asks) - sum(lv.size for lv in prev.asks)
    denom = dqb + dqa
    if denom == 0.0:
        return 0.0
    val = (dqb - dqa) / denom
    return min(1.0, max(-1.0, val))


def bpi(s: Snapshot) -> float:
    """Ratio of distance-weighted bid pressure to ask pressure.

    Each sized level contributes size/|price - mid|. Clamped into
    [1e-6, 1e6]; an empty book degenerates to the neutral 1.
    """
    mid = (s.best_bid + s.best_ask) * 0.5
    bp = sum(lv.size / (mid - lv.price) for lv in s.bids
             if lv.size > 0.0 and mid - lv.price > 0.0)
    ap = sum(lv.size / (lv.price - mid) for lv in s.asks
             if lv.size > 0.0 and lv.price - mid > 0.0)
    if ap > 0.0:
        val = bp / ap
    elif bp > 0.0:
        val = BPI_CLAMP[1]
    else:
        val = 1.0
    return min(BPI_CLAMP[1], max(BPI_CLAMP[0], val))


def deltas(prev_mid: float, prev_vamp: float,
           cur_mid: float, cur_vamp: float) -> tuple[float, float]:
    """First differences of mid and VAMP between consecutive snapshots."""
    return cur_mid - prev_mid, cur_vamp - prev_vamp


def indicator_vector(prev: Snapshot | None, cur: Snapshot,
                     n_multi: int = 20) -> tuple[np.ndarray, int]:
    """All 11 indicators for one snapshot via the kernel row.

    prev=None marks the first snapshot of a window: OFI and the deltas
    are 0 and FLAG_FIRST is set. Returns (values, degeneracy flags).
    """
    bpx, bsz, apx, asz = _sides(cur)
    out = np.empty(N_INDICATORS)
    if prev is None:
        flags, *_ = kernels.indicator_row(bpx, bsz, apx, asz, n_multi,
                                          False, 0.0, 0.0, 0.0, 0.0, out)
    else:
        pb, ps, pa, pz = _sides(prev)
        pout = np.empty(N_INDICATORS)
        _, btot, atot, pmid, pvamp = kernels.indicator_row(
            pb, ps, pa, pz, n_multi, False, 0.0, 0.0, 0.0, 0.0, pout)
        flags, *_ = kernels.indicator_row(bpx, bsz, apx, asz, n_multi,
                                          True, btot, atot, pmid, pvamp, out)
    return out, int(flags)


def compute_day(day: DayBook, n_multi: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Indicator matrix (n, 11) plus per-row degeneracy flags for a day."""
    n = len(day)
    values = np.empty((n, N_INDICATORS))
    flags = np.zeros(n, dtype=np.int64)
    btot = atot = pmid = pvamp = 0.0
    has_prev = False
    for i in range(n):
        f, btot, atot, pmid, pvamp = kernels.indicator_row(
            day.bid_px[i], day.bid_sz[i], day.ask_px[i], day.ask_sz[i],
            n_multi, has_prev, btot, atot, pmid, pvamp, values[i])
        flags[i] = f
        has_prev = True
    return values, flags


def correlation_matrix(series: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pearson correlations between indicator columns.

    Zero-variance columns keep a unit diagonal but zero off-diagonals;
    the returned boolean mask marks them. Requires >= 2 rows, all finite.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need a 2-D series with at least two rows")
    if not np.isfinite(x).all():
        raise ValueError("series contains non-finite values")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered
    var = np.diag(cov).copy()
    degenerate = var <= 0.0
    sd = np.sqrt(np.where(degenerate, 1.0, var))
    corr = cov / np.outer(sd, sd)
    corr[degenerate, :] = 0.0
    corr[:, degenerate] = 0.0
    np.fill_diagonal(corr, 1.0)
    corr = np.clip(corr, -1.0, 1.0)
    return corr, degenerate
