"""Command line interface.

Subcommands:

  ingest        validate raw day files and rewrite them in canonical form
  eval-compare  run the policy and both baselines over a month of days
  stats-eval    paired inference over per-day gap tables
  plot          SVG figures plus the matching CSV series
  bridge-serve  line-delimited JSON episode server for external trainers

Configuration merges four layers, later wins: built-in defaults, a
config file (INI, section [lobexec], schema_version 1), environment
variables (LOBEXEC_<KEY>), then command line flags. Exit codes: 0 ok,
2 configuration error, 3 data error, 4 statistics error.

Runs are deterministic: a manifest (config echo, input hashes, skipped
days) is written next to the outputs and contains no timestamps, so
identical inputs produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from ._backend import BACKEND
from .errors import ConfigError, DataError, LobexecError, ProtocolError, StatsError
from .exec_engine import FeeSchedule, ImpactParams
from .episode_env import NormalizerStats, RewardParams
from .eval_protocol import (aggregate_daily, gap_series, read_daily_csv,
                            results_frame, run_day, write_daily_csv,
                            write_episode_csv)
from .policies import POLICY_NAMES
from .snapshot_store import list_days, load_day, write_day
from .stats import compute_stats, write_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_STATS = 4

CONFIG_SECTION = "lobexec"
CONFIG_SCHEMA_VERSION = 1
ENV_PREFIX = "LOBEXEC_"


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_horizons(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(p) for p in str(text).split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"bad horizon list {text!r}") from exc
    if not values or any(h <= 0 for h in values):
        raise ConfigError(f"horizons must be positive seconds, got {text!r}")
    return values


@dataclass
class RunConfig:
    """Resolved run settings shared by all subcommands."""

    data_dir: str = "data"
    out_dir: str = "out"
    horizons: tuple[int, ...] = (1800, 3600, 7200)
    k_starts: int = 10
    seed: int = 0
    jitter_starts: bool = False
    policy: str = "oracle"
    aggregate: str = "mean"
    alpha: float = 0.05
    winsorize: float = 0.0
    resamples: int = 10000
    taker_fee_bps: float = 10.0
    impact_k: float = 0.3
    impact_half_life: float = 60.0
    size_exponent: float = 0.5
    initial_btc: float = 1.0
    target_fraction: float = 0.0
    trade_fraction: float = 0.1
    inventory_penalty: float = 0.01
    stats_file: str = ""

    def validate(self) -> "RunConfig":
        if self.policy not in POLICY_NAMES:
            raise ConfigError(f"unknown policy {self.policy!r}")
        if self.aggregate not in ("mean", "median"):
            raise ConfigError("aggregate must be 'mean' or 'median'")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 0.0 <= self.winsorize < 0.5:
            raise ConfigError("winsorize fraction must lie in [0, 0.5)")
        if self.k_starts < 1:
            raise ConfigError("k_starts must be >= 1")
        if self.resamples < 1:
            raise ConfigError("resamples must be >= 1")
        if not 0.0 <= self.taker_fee_bps <= 500.0:
            raise ConfigError("taker_fee_bps must lie in [0, 500]")
        if self.impact_k < 0 or self.impact_half_life <= 0 or self.size_exponent <= 0:
            raise ConfigError("impact parameters must be positive (k may be 0)")
        if self.initial_btc <= 0:
            raise ConfigError("initial_btc must be positive")
        if not 0.0 <= self.target_fraction < 1.0:
            raise ConfigError("target_fraction must lie in [0, 1)")
        if not 0.0 < self.trade_fraction <= 1.0:
            raise ConfigError("trade_fraction must lie in (0, 1]")
        if self.inventory_penalty < 0:
            raise ConfigError("inventory_penalty must be >= 0")
        return self

    def fees(self) -> FeeSchedule:
        return FeeSchedule(taker_fee=self.taker_fee_bps / 1e4)

    def impact(self) -> ImpactParams:
        return ImpactParams(k=self.impact_k, size_exponent=self.size_exponent,
                            half_life_s=self.impact_half_life)

    def reward(self) -> RewardParams:
        return RewardParams(inventory_penalty=self.inventory_penalty)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["horizons"] = list(self.horizons)
        return d


_PARSERS = {
    "horizons": _parse_horizons,
    "jitter_starts": _parse_bool,
    "k_starts": int, "seed": int, "resamples": int,
    "alpha": float, "winsorize": float, "taker_fee_bps": float,
    "impact_k": float, "impact_half_life": float, "size_exponent": float,
    "initial_btc": float, "target_fraction": float, "trade_fraction": float,
    "inventory_penalty": float,
    "data_dir": str, "out_dir": str, "policy": str, "aggregate": str,
    "stats_file": str,
}


def _parse_field(name: str, raw: str):
    try:
        return _PARSERS[name](raw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def load_config(path=None, env=None, overrides: dict | None = None) -> RunConfig:
    """Merge defaults, config file, environment, and flag overrides."""
    env = env if env is not None else os.environ
    values = {f.name: f.default for f in dataclasses.fields(RunConfig)}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        read = parser.read(str(path))
        if not read:
            raise ConfigError(f"config file not found: {path}")
        if not parser.has_section(CONFIG_SECTION):
            raise ConfigError(f"config file missing [{CONFIG_SECTION}] section")
        section = dict(parser.items(CONFIG_SECTION))
        version = section.pop("schema_version", None)
        if version is None or version.strip() != str(CONFIG_SCHEMA_VERSION):
            raise ConfigError(
                f"config schema_version must be {CONFIG_SCHEMA_VERSION}, got {version!r}")
        unknown = set(section) - set(values)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        for key, raw in section.items():
            values[key] = _parse_field(key, raw)
    for name in values:
        raw = env.get(ENV_PREFIX + name.upper())
        if raw is not None:
            values[name] = _parse_field(name, raw)
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    return RunConfig(**values).validate()


def write_config(cfg: RunConfig, path) -> Path:
    """Write the resolved configuration back out as a loadable file."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.add_section(CONFIG_SECTION)
    parser.set(CONFIG_SECTION, "schema_version", str(CONFIG_SCHEMA_VERSION))
    for f in dataclasses.fields(RunConfig):
        value = getattr(cfg, f.name)
        if f.name == "horizons":
            value = ",".join(str(h) for h in value)
        parser.set(CONFIG_SECTION, f.name, str(value))
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        parser.write(fh)
    return path


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def build_manifest(cfg: RunConfig, inputs: list[Path],
                   skipped: list[dict]) -> dict:
    """Deterministic run fingerprint: no timestamps, no absolute paths."""
    return {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "package": {"name": "lobexec", "version": __version__},
        "backend": BACKEND,
        "config": cfg.as_dict(),
        "inputs": {Path(p).name: file_sha256(p) for p in sorted(inputs)},
        "skipped": sorted(skipped, key=lambda s: (s["day"], s["horizon_s"])),
    }


def write_manifest(manifest: dict, out_dir) -> Path:
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def _config_from_args(args) -> RunConfig:
    overrides = {}
    for f in dataclasses.fields(RunConfig):
        if hasattr(args, f.name):
            overrides[f.name] = getattr(args, f.name)
    return load_config(path=getattr(args, "config", None), overrides=overrides)


def _select_inputs(cfg: RunConfig, args) -> list[tuple[str, Path]]:
    paths = list_days(cfg.data_dir)
    days = [(p.stem, p) for p in paths]
    start = getattr(args, "date_start", None)
    end = getattr(args, "date_end", None)
    if start:
        days = [(d, p) for d, p in days if d >= start]
    if end:
        days = [(d, p) for d, p in days if d <= end]
    if not days:
        raise DataError(f"no day files selected under {cfg.data_dir}")
    return days


def cmd_ingest(args) -> int:
    cfg = _config_from_args(args)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    inputs: list[Path] = []
    for rawpath in args.inputs:
        p = Path(rawpath)
        if p.is_dir():
            inputs.extend(list_days(p))
        else:
            inputs.append(p)
    if not inputs:
        raise DataError("no input files to ingest")
    failures = 0
    for path in inputs:
        try:
            day, rep = load_day(path)
        except (DataError, OSError) as exc:
            failures += 1
            print(f"{path.name}: FAILED {exc}", file=sys.stderr)
            continue
        suffix = ".csv" if args.format == "csv" else ".lobd"
        written = out_dir / f"{day.date}{suffix}"
        write_day(day, written, format=args.format)
        print(f"{path.name}: kept {len(day)}/{rep.rows_in} rows "
              f"(dup_ts={rep.rows_dropped_duplicate_ts} "
              f"bad_top={rep.rows_dropped_invalid_top} "
              f"bad_spread={rep.rows_dropped_nonpositive_spread} "
              f"clipped={rep.values_clipped}) -> {written.name}")
    print(f"ingested {len(inputs) - failures}/{len(inputs)} files")
    return EXIT_OK if failures == 0 else EXIT_DATA


def cmd_eval_compare(args) -> int:
    cfg = _config_from_args(args)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    days = _select_inputs(cfg, args)
    impact, fees, reward = cfg.impact(), cfg.fees(), cfg.reward()
    rows_by_h: dict[int, list] = {h: [] for h in cfg.horizons}
    skipped: list[dict] = []
    for date, path in days:
        day, _ = load_day(path)
        for horizon_s in cfg.horizons:
            try:
                rows_by_h[horizon_s].extend(run_day(
                    day, horizon_s, policy=cfg.policy, k=cfg.k_starts,
                    seed=cfg.seed, jitter=cfg.jitter_starts, impact=impact,
                    fees=fees, reward_params=reward,
                    initial_btc=cfg.initial_btc,
                    target_fraction=cfg.target_fraction,
                    trade_fraction=cfg.trade_fraction))
            except DataError as exc:
                skipped.append({"day": date, "horizon_s": horizon_s,
                                "reason": str(exc)})
    written: list[Path] = []
    for horizon_s in cfg.horizons:
        rows = rows_by_h[horizon_s]
        if not rows:
            continue
        frame = results_frame(rows)
        written.append(write_episode_csv(frame, out_dir, horizon_s, cfg.k_starts))
        daily = aggregate_daily(frame, statistic=cfg.aggregate)
        written.append(write_daily_csv(daily, out_dir, horizon_s, cfg.k_starts))
    if not written:
        raise DataError("no horizon produced any episodes")
    manifest = build_manifest(cfg, [p for _, p in days], skipped)
    manifest_path = write_manifest(manifest, out_dir)
    for path in written:
        print(f"wrote {path}")
    print(f"wrote {manifest_path}")
    print(json.dumps(manifest, sort_keys=True))
    return EXIT_OK


def _load_daily_frames(cfg: RunConfig, args):
    import pandas as pd

    if getattr(args, "daily", None):
        paths = [Path(p) for p in args.daily]
    else:
        paths = sorted(Path(cfg.out_dir).glob("daily_h*_k*.csv"))
    if not paths:
        raise DataError(f"no daily gap tables found under {cfg.out_dir}")
    return pd.concat([read_daily_csv(p) for p in paths], ignore_index=True), paths


def cmd_stats_eval(args) -> int:
    cfg = _config_from_args(args)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    daily, paths = _load_daily_frames(cfg, args)
    series = gap_series(daily)
    for s in series:
        if len(s.days) < 2:
            raise StatsError(
                f"horizon {s.horizon_s} vs {s.baseline}: need >= 2 days, "
                f"got {len(s.days)}")
    results = compute_stats(series, alpha=cfg.alpha,
                            winsorize_fraction=cfg.winsorize,
                            resamples=cfg.resamples, seed=cfg.seed)
    manifest = build_manifest(cfg, paths, [])
    csv_path, md_path = write_report(results, out_dir, alpha=cfg.alpha,
                                     manifest={
                                         "config": json.dumps(
                                             cfg.as_dict(), sort_keys=True),
                                         "inputs": json.dumps(
                                             manifest["inputs"], sort_keys=True),
                                         "backend": BACKEND,
                                     })
    print(f"wrote {csv_path}")
    print(f"wrote {md_path}")
    for r in results:
        mark = "*" if r.p_adj < cfg.alpha else " "
        print(f"{mark} h={r.horizon_s:>5d} vs {r.baseline}: mean gap "
              f"{r.mean_gap:+.5f}% p_adj={r.p_adj:.4g} ({r.wilcoxon_method})")
    return EXIT_OK


def _save_plot(fig, out_dir: Path, stem: str, series_frame) -> list[Path]:
    svg = out_dir / f"{stem}.svg"
    csv = out_dir / f"{stem}.csv"
    # no embedded creation date: reruns must be byte-identical
    fig.savefig(svg, format="svg", metadata={"Date": None})
    series_frame.to_csv(csv, index=False)
    return [svg, csv]


def cmd_plot(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "lobexec"
    import matplotlib.pyplot as plt
    import numpy as np
    import pandas as pd

    cfg = _config_from_args(args)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    daily, _ = _load_daily_frames(cfg, args)
    written: list[Path] = []
    for horizon_s, sub in daily.groupby("horizon_s"):
        sub = sub.sort_values("day").reset_index(drop=True)
        for baseline, gap_col, base_col in (("twap", "gap_twap", "twap"),
                                            ("vwap", "gap_vwap", "vwap")):
            gaps = sub[gap_col].to_numpy()
            days = sub["day"].astype(str).tolist()
            tag = f"h{int(horizon_s)}_{baseline}"

            fig, ax = plt.subplots(figsize=(8, 3))
            ax.bar(range(len(gaps)), gaps, color="#2c7fb8")
            ax.axhline(0.0, color="black", lw=0.8)
            ax.set_xticks(range(len(days)))
            ax.set_xticklabels(days, rotation=90, fontsize=6)
            ax.set_ylabel("gap (%)")
            ax.set_title(f"daily gap vs {baseline.upper()}, H={int(horizon_s)}s")
            fig.tight_layout()
            written += _save_plot(fig, out_dir, f"gaps_{tag}",
                                  pd.DataFrame({"day": days, "gap": gaps}))
            plt.close(fig)

            cum = np.cumsum(gaps)
            fig, ax = plt.subplots(figsize=(8, 3))
            ax.plot(range(len(cum)), cum, marker="o", ms=3)
            ax.axhline(0.0, color="black", lw=0.8)
            ax.set_ylabel("cumulative gap (%)")
            ax.set_title(f"cumulative gap vs {baseline.upper()}, H={int(horizon_s)}s")
            fig.tight_layout()
            written += _save_plot(fig, out_dir, f"cumgap_{tag}",
                                  pd.DataFrame({"day": days, "gap": gaps,
                                                "cumulative": cum}))
            plt.close(fig)

            xs = np.sort(gaps)
            ys = np.arange(1, len(xs) + 1) / len(xs)
            fig, ax = plt.subplots(figsize=(5, 4))
            ax.step(xs, ys, where="post")
            ax.axvline(0.0, color="black", lw=0.8)
            ax.set_xlabel("gap (%)")
            ax.set_ylabel("ECDF")
            ax.set_title(f"gap ECDF vs {baseline.upper()}, H={int(horizon_s)}s")
            fig.tight_layout()
            written += _save_plot(fig, out_dir, f"ecdf_{tag}",
                                  pd.DataFrame({"gap": xs, "ecdf": ys}))
            plt.close(fig)

            counts, edges = np.histogram(gaps, bins="auto")
            fig, ax = plt.subplots(figsize=(5, 4))
            ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge",
                   color="#41b6c4", edgecolor="black", lw=0.5)
            ax.set_xlabel("gap (%)")
            ax.set_ylabel("days")
            ax.set_title(f"gap histogram vs {baseline.upper()}, H={int(horizon_s)}s")
            fig.tight_layout()
            written += _save_plot(fig, out_dir, f"hist_{tag}",
                                  pd.DataFrame({"bin_left": edges[:-1],
                                                "bin_right": edges[1:],
                                                "count": counts}))
            plt.close(fig)

            base = sub[base_col].to_numpy()
            rl = sub["rl"].to_numpy()
            fig, ax = plt.subplots(figsize=(4.5, 4.5))
            ax.scatter(base, rl, s=14)
            lo = float(min(base.min(), rl.min()))
            hi = float(max(base.max(), rl.max()))
            ax.plot([lo, hi], [lo, hi], color="black", lw=0.8, ls="--")
            ax.set_xlabel(f"{baseline} PnL (%)")
            ax.set_ylabel("policy PnL (%)")
            ax.set_title(f"paired PnL, H={int(horizon_s)}s")
            fig.tight_layout()
            written += _save_plot(fig, out_dir, f"scatter_{tag}",
                                  pd.DataFrame({"day": days,
                                                f"{baseline}_pnl": base,
                                                "rl_pnl": rl}))
            plt.close(fig)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_bridge_serve(args) -> int:
    from .policy_bridge import EnvAdapter, serve_socket, serve_stdio

    cfg = _config_from_args(args)
    stats = NormalizerStats.load(cfg.stats_file) if cfg.stats_file else None

    def make_adapter() -> EnvAdapter:
        return EnvAdapter(data_dir=cfg.data_dir, impact=cfg.impact(),
                          fees=cfg.fees(), reward_params=cfg.reward(),
                          stats=stats)

    if args.transport == "stdio":
        serve_stdio(make_adapter())
    else:
        serve_socket(make_adapter, host=args.host, port=args.port)
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="INI config file")
    p.add_argument("--data-dir", dest="data_dir", help="day file directory")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")
    p.add_argument("--seed", type=int, help="base seed for all randomness")


def _add_engine(p: argparse.ArgumentParser) -> None:
    p.add_argument("--taker-fee-bps", dest="taker_fee_bps", type=float,
                   help="taker fee in basis points")
    p.add_argument("--impact-k", dest="impact_k", type=float,
                   help="transient impact coefficient")
    p.add_argument("--impact-half-life", dest="impact_half_life", type=float,
                   help="impact decay half life in seconds")
    p.add_argument("--size-exponent", dest="size_exponent", type=float,
                   help="impact size exponent")
    p.add_argument("--initial-btc", dest="initial_btc", type=float,
                   help="starting inventory")
    p.add_argument("--target-fraction", dest="target_fraction", type=float,
                   help="inventory fraction to keep at the horizon")
    p.add_argument("--trade-fraction", dest="trade_fraction", type=float,
                   help="per-step cap as a fraction of remaining inventory")
    p.add_argument("--inventory-penalty", dest="inventory_penalty", type=float,
                   help="terminal penalty per unit of residual overshoot")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lobexec",
        description="Order book replay, execution baselines, and paired inference.")
    parser.add_argument("--version", action="version",
                        version=f"lobexec {__version__} ({BACKEND} backend)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and canonicalize day files")
    _add_common(p)
    p.add_argument("inputs", nargs="+", help="day files or directories")
    p.add_argument("--format", choices=("csv", "binary"), default="binary",
                   help="output format (default binary)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("eval-compare",
                       help="run policy vs TWAP/VWAP over all days")
    _add_common(p)
    _add_engine(p)
    p.add_argument("--horizons", type=_parse_horizons,
                   help="comma separated horizon seconds, e.g. 1800,3600")
    p.add_argument("--k-starts", dest="k_starts", type=int,
                   help="episode starts per day and horizon")
    p.add_argument("--policy", choices=POLICY_NAMES,
                   help="policy reported in the RL column")
    p.add_argument("--jitter-starts", dest="jitter_starts",
                   action="store_const", const=True,
                   help="jitter start placement within each stride")
    p.add_argument("--aggregate", choices=("mean", "median"),
                   help="within-day aggregation over starts")
    p.add_argument("--date-start", dest="date_start", help="first day (YYYYMMDD)")
    p.add_argument("--date-end", dest="date_end", help="last day (YYYYMMDD)")
    p.set_defaults(func=cmd_eval_compare)

    p = sub.add_parser("stats-eval", help="paired tests over daily gap tables")
    _add_common(p)
    p.add_argument("--daily", nargs="+", metavar="CSV",
                   help="explicit daily tables (default: discover in out dir)")
    p.add_argument("--alpha", type=float, help="significance level")
    p.add_argument("--winsorize", type=float,
                   help="symmetric winsorization fraction")
    p.add_argument("--resamples", type=int, help="bootstrap resamples")
    p.add_argument("--aggregate", choices=("mean", "median"),
                   help="recorded aggregation mode (manifest echo)")
    p.set_defaults(func=cmd_stats_eval)

    p = sub.add_parser("plot", help="figures and CSV series from daily tables")
    _add_common(p)
    p.add_argument("--daily", nargs="+", metavar="CSV",
                   help="explicit daily tables (default: discover in out dir)")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("bridge-serve",
                       help="serve episodes over line-delimited JSON")
    _add_common(p)
    _add_engine(p)
    p.add_argument("--transport", choices=("stdio", "socket"), default="stdio")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7421)
    p.add_argument("--stats-file", dest="stats_file",
                   help="frozen normalizer stats applied to observations")
    p.set_defaults(func=cmd_bridge_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except StatsError as exc:
        print(f"stats error: {exc}", file=sys.stderr)
        return EXIT_STATS
    except ProtocolError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LobexecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
