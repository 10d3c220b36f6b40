"""Paired one-sided inference on daily gap series.

Implements the evaluation's statistical layer: Wilcoxon signed-rank with
an exact small-sample distribution, a paired t sensitivity check,
Benjamini-Hochberg step-up adjustment per horizon family, percentile
bootstrap CIs of the mean, Cohen's d, win rate, and optional
winsorization. All functions consume one value per day (DailyGapSeries);
per-episode rows never reach this module.

Branch policy for the Wilcoxon p-value, recorded in each result:
  exact_dp     no ties, n <= 25: subset-sum DP over integer ranks
  exact_enum   ties, n <= 12: full 2^n sign enumeration on average ranks
  normal_approx otherwise: tie-corrected variance, 0.5 continuity
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import StatsError
from .eval_protocol import DailyGapSeries

STATS_COLUMNS = ["horizon_s", "baseline", "n_days", "mean_gap", "median_gap",
                 "p_wilcoxon", "p_adj", "p_ttest", "cohens_d", "win_rate",
                 "ci_low", "ci_high", "winsorized"]


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    p_value: float
    method: str
    n_used: int
    zeros_dropped: int
    degenerate: bool = False


@dataclass(frozen=True)
class TTestResult:
    statistic: float | None
    p_value: float | None
    dof: int
    degenerate: bool = False


@dataclass(frozen=True)
class TestResult:
    """Full inference record for one (horizon, baseline) pair."""

    baseline: str
    horizon_s: int
    n_days: int
    mean_gap: float
    median_gap: float
    wilcoxon_stat: float
    p_raw: float
    p_adj: float
    t_stat: float | None
    t_p: float | None
    cohens_d: float | None
    win_rate: float
    ci_low: float
    ci_high: float
    winsorized: bool
    wilcoxon_method: str = "exact_dp"
    zeros_dropped: int = 0


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing their average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.shape[0])
    i = 0
    while i < values.shape[0]:
        j = i
        while j + 1 < values.shape[0] and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for m in range(i, j + 1):
            ranks[order[m]] = avg
        i = j + 1
    return ranks


def _exact_tail_dp(ranks: list[int], w: int):
    """P(W+ >= w) and P(W+ = w) over all 2^n sign assignments.

    Subset-sum DP with exact integer counts; valid for untied integer
    ranks (and for half-integer ranks pre-scaled by 2).
    """
    total = sum(ranks)
    counts = [0] * (total + 1)
    counts[0] = 1
    for r in ranks:
        for s in range(total - r, -1, -1):
            if counts[s]:
                counts[s + r] += counts[s]
    denom = 2 ** len(ranks)
    w = max(0, w)
    ge = sum(counts[w:]) if w <= total else 0
    atom = counts[w] if 0 <= w <= total else 0
    return ge / denom, atom / denom


def wilcoxon_one_sided(gaps, alternative: str = "greater") -> WilcoxonResult:
    """Signed-rank test of H1: median gap > 0 (or != 0 when two-sided).

    Exact zero differences are dropped before ranking. Statistic is W+,
    the rank sum over positive differences with average ranks for ties.
    """
    d = _as_gaps(gaps)
    if alternative not in ("greater", "two-sided"):
        raise ValueError("alternative must be 'greater' or 'two-sided'")
    nonzero = d[d != 0.0]
    zeros = int(d.shape[0] - nonzero.shape[0])
    n = int(nonzero.shape[0])
    if n == 0:
        return WilcoxonResult(statistic=0.0, p_value=1.0, method="degenerate",
                              n_used=0, zeros_dropped=zeros, degenerate=True)
    ranks = _average_ranks(np.abs(nonzero))
    w_plus = float(ranks[nonzero > 0.0].sum())
    _, tie_counts = np.unique(np.abs(nonzero), return_counts=True)
    has_ties = bool((tie_counts > 1).any())

    if not has_ties and n <= 25:
        method = "exact_dp"
        # untied average ranks are exactly 1..n
        int_ranks = [int(round(r)) for r in ranks]
        p_ge, atom = _exact_tail_dp(int_ranks, int(round(w_plus)))
    elif has_ties and n <= 12:
        method = "exact_enum"
        # average ranks are half-integers; scaling by 2 keeps sums exact
        scaled = [int(round(2.0 * r)) for r in ranks]
        p_ge, atom = _exact_tail_dp(scaled, int(round(2.0 * w_plus)))
    else:
        method = "normal_approx"
        mean = n * (n + 1) / 4.0
        tie_term = float(((tie_counts ** 3) - tie_counts).sum()) / 48.0
        var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
        if var <= 0.0:
            return WilcoxonResult(statistic=w_plus, p_value=1.0,
                                  method="degenerate", n_used=n,
                                  zeros_dropped=zeros, degenerate=True)
        z = (w_plus - mean - 0.5) / math.sqrt(var)
        p_ge = 0.5 * math.erfc(z / math.sqrt(2.0))
        atom = 0.0

    if alternative == "greater":
        p = p_ge
    else:
        p_le = 1.0 - p_ge + atom
        p = min(1.0, 2.0 * min(p_ge, p_le))
    return WilcoxonResult(statistic=w_plus, p_value=float(min(1.0, p)),
                          method=method, n_used=n, zeros_dropped=zeros)


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (Lentz)."""
    max_iter, eps, fpmin = 300, 3e-15, 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise StatsError("incomplete beta continued fraction did not converge")


def _betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _t_sf(t: float, dof: float) -> float:
    """Upper-tail probability of Student's t."""
    x = dof / (dof + t * t)
    p = 0.5 * _betainc(dof / 2.0, 0.5, x)
    return p if t >= 0.0 else 1.0 - p


def paired_t_one_sided(gaps, alternative: str = "greater") -> TTestResult:
    """t = mean / (sd / sqrt(n)) with n-1 dof; zeros are kept."""
    d = _as_gaps(gaps)
    if alternative not in ("greater", "two-sided"):
        raise ValueError("alternative must be 'greater' or 'two-sided'")
    n = int(d.shape[0])
    if n < 2:
        raise StatsError("paired t-test needs n >= 2")
    sd = float(d.std(ddof=1))
    if sd <= 0.0:
        return TTestResult(statistic=None, p_value=None, dof=n - 1,
                           degenerate=True)
    t = float(d.mean()) / (sd / math.sqrt(n))
    if alternative == "greater":
        p = _t_sf(t, n - 1)
    else:
        p = _betainc((n - 1) / 2.0, 0.5, (n - 1) / ((n - 1) + t * t))
    return TTestResult(statistic=t, p_value=float(p), dof=n - 1)


def bh_adjust(p_values) -> np.ndarray:
    """Benjamini-Hochberg step-up adjusted p-values, input order kept."""
    p = np.asarray(p_values, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("p_values must be 1-D")
    if ((p < 0.0) | (p > 1.0)).any():
        raise ValueError("p-values must lie in [0, 1]")
    m = p.shape[0]
    order = np.argsort(p, kind="stable")
    adjusted = np.empty(m)
    running = 1.0
    for i in range(m - 1, -1, -1):
        rank = i + 1
        running = min(running, m * p[order[i]] / rank)
        adjusted[order[i]] = running
    return adjusted


def bootstrap_ci_mean(gaps, resamples: int = 10000, level: float = 0.95,
                      seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap CI of the mean, nearest-rank percentiles.

    Deterministic given the seed (PCG64 via numpy's default_rng; the seed
    goes into the run manifest).
    """
    d = _as_gaps(gaps)
    n = int(d.shape[0])
    if n < 1:
        raise StatsError("bootstrap needs n >= 1")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(resamples, n))
    means = np.sort(d[idx].mean(axis=1))
    q_lo = (1.0 - level) / 2.0
    q_hi = 1.0 - q_lo
    lo = means[max(0, math.ceil(q_lo * resamples) - 1)]
    hi = means[min(resamples - 1, math.ceil(q_hi * resamples) - 1)]
    return float(lo), float(hi)


def cohens_d(gaps) -> float | None:
    """mean / sample sd (n-1 denominator); None when sd is zero."""
    d = _as_gaps(gaps)
    if d.shape[0] < 2:
        raise StatsError("Cohen's d needs n >= 2")
    sd = float(d.std(ddof=1))
    if sd <= 0.0:
        return None
    return float(d.mean()) / sd


def win_rate(gaps) -> float:
    """Fraction of days with gap > 0; zeros count as non-wins."""
    d = _as_gaps(gaps)
    if d.shape[0] == 0:
        raise StatsError("win rate needs n >= 1")
    return float((d > 0.0).sum()) / d.shape[0]


def winsorize(gaps, fraction: float = 0.01) -> np.ndarray:
    """Clamp k = ceil(fraction * n) order statistics at each end.

    Nearest-rank rule: the lower bound is the (k+1)-th smallest value,
    the upper bound the (k+1)-th largest; fraction 0 is the identity.
    """
    d = _as_gaps(gaps)
    if not 0.0 <= fraction < 0.5:
        raise ValueError("fraction must be in [0, 0.5)")
    n = d.shape[0]
    k = math.ceil(fraction * n)
    if k == 0 or n == 0:
        return d.copy()
    k = min(k, (n - 1) // 2)
    if k == 0:
        return d.copy()
    s = np.sort(d)
    return np.clip(d, s[k], s[n - 1 - k])


def _as_gaps(gaps) -> np.ndarray:
    if isinstance(gaps, DailyGapSeries):
        return np.asarray(gaps.gaps, dtype=np.float64)
    return np.asarray(gaps, dtype=np.float64)


def compute_stats(series: list[DailyGapSeries], alpha: float = 0.05,
                  winsorize_fraction: float = 0.0, resamples: int = 10000,
                  level: float = 0.95, seed: int = 0,
                  alternative: str = "greater") -> list[TestResult]:
    """Full inference over gap series, BH-adjusted per horizon family."""
    if not series:
        raise StatsError("no gap series to test")
    for s in series:
        if not isinstance(s, DailyGapSeries):
            raise StatsError("stats only accept per-day gap series")
    results: list[TestResult] = []
    by_horizon: dict[int, list[DailyGapSeries]] = {}
    for s in series:
        by_horizon.setdefault(s.horizon_s, []).append(s)
    for horizon_s in sorted(by_horizon):
        family = sorted(by_horizon[horizon_s], key=lambda s: s.baseline)
        prepared = []
        for s in family:
            d = _as_gaps(s)
            winsorized = winsorize_fraction > 0.0
            if winsorized:
                d = winsorize(d, winsorize_fraction)
            prepared.append((s, d, winsorized))
        p_raw = [wilcoxon_one_sided(d, alternative) for _, d, _ in prepared]
        p_adj = bh_adjust([r.p_value for r in p_raw])
        for j, ((s, d, winsorized), wres) in enumerate(zip(prepared, p_raw)):
            tres = paired_t_one_sided(d, alternative)
            boot_seed = int(np.random.SeedSequence(
                [seed, horizon_s, j]).generate_state(1)[0])
            ci_low, ci_high = bootstrap_ci_mean(d, resamples=resamples,
                                                level=level, seed=boot_seed)
            results.append(TestResult(
                baseline=s.baseline, horizon_s=horizon_s, n_days=d.shape[0],
                mean_gap=float(d.mean()), median_gap=float(np.median(d)),
                wilcoxon_stat=wres.statistic, p_raw=wres.p_value,
                p_adj=float(p_adj[j]), t_stat=tres.statistic,
                t_p=tres.p_value, cohens_d=cohens_d(d),
                win_rate=win_rate(d), ci_low=ci_low, ci_high=ci_high,
                winsorized=winsorized, wilcoxon_method=wres.method,
                zeros_dropped=wres.zeros_dropped))
    return results


def stats_frame(results: list[TestResult]) -> pd.DataFrame:
    """Results as a DataFrame in the canonical stats CSV column order."""
    if not results:
        raise StatsError("no results to report")
    rows = []
    for r in results:
        rows.append({
            "horizon_s": r.horizon_s, "baseline": r.baseline,
            "n_days": r.n_days, "mean_gap": r.mean_gap,
            "median_gap": r.median_gap, "p_wilcoxon": r.p_raw,
            "p_adj": r.p_adj, "p_ttest": r.t_p, "cohens_d": r.cohens_d,
            "win_rate": r.win_rate, "ci_low": r.ci_low, "ci_high": r.ci_high,
            "winsorized": r.winsorized,
        })
    df = pd.DataFrame(rows, columns=STATS_COLUMNS)
    # degenerate tests carry None; keep the columns numeric regardless
    df["p_ttest"] = df["p_ttest"].astype(np.float64)
    df["cohens_d"] = df["cohens_d"].astype(np.float64)
    return df.sort_values(["horizon_s", "baseline"]).reset_index(drop=True)


def report(results: list[TestResult], alpha: float = 0.05,
           manifest: dict | None = None) -> str:
    """Markdown summary, one table per horizon family."""
    if not results:
        raise StatsError("no results to report")
    lines = ["# Daily gap inference", ""]
    by_horizon: dict[int, list[TestResult]] = {}
    for r in results:
        by_horizon.setdefault(r.horizon_s, []).append(r)
    for horizon_s in sorted(by_horizon):
        lines.append(f"## Horizon {horizon_s} s")
        lines.append("")
        lines.append("| baseline | n | mean gap (%) | median (%) | 95% CI | "
                     "p (Wilcoxon) | p (BH) | p (t) | Cohen's d | win rate | "
                     "branch |")
        lines.append("|---|---|---|---|---|---|---|---|---|---|---|")
        for r in sorted(by_horizon[horizon_s], key=lambda r: r.baseline):
            t_p = f"{r.t_p:.4g}" if r.t_p is not None else "-"
            d_s = f"{r.cohens_d:.3f}" if r.cohens_d is not None else "-"
            mark = " *" if r.p_adj < alpha else ""
            lines.append(
                f"| {r.baseline} | {r.n_days} | {r.mean_gap:.5f} "
                f"| {r.median_gap:.5f} | [{r.ci_low:.5f}, {r.ci_high:.5f}] "
                f"| {r.p_raw:.4g} | {r.p_adj:.4g}{mark} | {t_p} | {d_s} "
                f"| {r.win_rate:.3f} | {r.wilcoxon_method} |")
        lines.append("")
    lines.append(f"`*` adjusted p < {alpha} (one-sided, BH per horizon).")
    lines.append("")
    if manifest:
        lines.append("## Run manifest")
        lines.append("")
        for key in sorted(manifest):
            lines.append(f"- {key}: {manifest[key]}")
        lines.append("")
    return "\n".join(lines)


def write_report(results: list[TestResult], out_dir, alpha: float = 0.05,
                 manifest: dict | None = None) -> tuple[Path, Path]:
    """Write stats.csv and report.md; returns both paths."""
    out_dir = Path(out_dir)
    csv_path = out_dir / "stats.csv"
    md_path = out_dir / "report.md"
    stats_frame(results).to_csv(csv_path, index=False,
                                float_format=lambda v: repr(float(v)))
    md_path.write_text(report(results, alpha=alpha, manifest=manifest),
                       encoding="utf-8")
    return csv_path, md_path
