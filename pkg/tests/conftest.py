"""Shared fixtures: synthetic days and a small on-disk data directory."""

import itertools

import numpy as np
import pytest

from lobexec.snapshot_store import DayBook
from lobexec.synth import make_day, make_flat_day, write_month


@pytest.fixture(scope="session")
def synth_day() -> DayBook:
    """One mean-reverting synthetic day, 4000 snapshots at 1 s."""
    return make_day("20200201", seed=7, n_snapshots=4000)


@pytest.fixture(scope="session")
def synth_day_b() -> DayBook:
    return make_day("20200202", seed=7, n_snapshots=4000)


@pytest.fixture(scope="session")
def flat_day() -> DayBook:
    """Constant book with a huge top level and negligible spread."""
    return make_flat_day()


@pytest.fixture(scope="session")
def month_dir(tmp_path_factory):
    """Seven binary day files (one date missing) for CLI-level tests."""
    d = tmp_path_factory.mktemp("month")
    write_month(d, start_date="20200201", n_days=8, missing_index=5,
                seed=7, n_snapshots=2200)
    return d


def make_static_day(n: int = 200, mid: float = 100.0, tick: float = 0.1,
                    level_size: float = 1.0) -> DayBook:
    """Identical finite-depth ladder at every snapshot, 1 s cadence.

    Each level holds `level_size`, so an order larger than that walks the
    book and pays a price for its own size. Used for impact-cost ordering
    checks where the flat deep book would hide the walk cost entirely.
    """
    ts = np.arange(n, dtype=np.int64) * 10**9
    bid0 = np.array([mid - tick / 2 - i * tick for i in range(20)])
    ask0 = np.array([mid + tick / 2 + i * tick for i in range(20)])
    bid_px = np.tile(bid0, (n, 1))
    ask_px = np.tile(ask0, (n, 1))
    bid_sz = np.full((n, 20), level_size)
    ask_sz = np.full((n, 20), level_size)
    return DayBook("20200101", ts, bid_px, bid_sz, ask_px, ask_sz)


def wilcoxon_enum_p(d: np.ndarray) -> float:
    """One-sided signed-rank p by full 2^n sign enumeration.

    Independent of the library implementation: ranks come from scipy and
    every sign assignment is visited explicitly. Practical for n <= 14.
    """
    from scipy.stats import rankdata

    d = np.asarray(d, dtype=np.float64)
    d = d[d != 0.0]
    n = d.shape[0]
    if n == 0:
        return 1.0
    ranks = rankdata(np.abs(d))
    w_obs = float(ranks[d > 0.0].sum())
    count = 0
    for signs in itertools.product((0.0, 1.0), repeat=n):
        w = float(np.dot(ranks, signs))
        if w >= w_obs - 1e-12:
            count += 1
    return count / 2.0 ** n


def bh_brute(p: np.ndarray) -> np.ndarray:
    """Benjamini-Hochberg adjustment straight from the definition:
    adj_(i) = min(1, min_{j >= i} m * p_(j) / j), O(m^2)."""
    p = np.asarray(p, dtype=np.float64)
    m = p.shape[0]
    order = np.argsort(p, kind="stable")
    adj = np.empty(m)
    for pos in range(m):
        tail = [m * p[order[j]] / (j + 1) for j in range(pos, m)]
        adj[order[pos]] = min(1.0, min(tail))
    return adj


def random_ladder(rng: np.random.Generator, mid: float = 100.0):
    """A valid random 20-level two-sided ladder (arrays, best first)."""
    bid_gaps = rng.uniform(0.01, 0.5, 20)
    ask_gaps = rng.uniform(0.01, 0.5, 20)
    half = rng.uniform(0.01, 0.3)
    bid_px = mid - half - np.cumsum(bid_gaps) + bid_gaps[0]
    ask_px = mid + half + np.cumsum(ask_gaps) - ask_gaps[0]
    bid_sz = rng.uniform(0.0, 5.0, 20)
    ask_sz = rng.uniform(0.0, 5.0, 20)
    bid_sz[0] = rng.uniform(0.1, 5.0)
    ask_sz[0] = rng.uniform(0.1, 5.0)
    return bid_px, bid_sz, ask_px, ask_sz
