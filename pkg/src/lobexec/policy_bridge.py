"""Expose episodes to external trainers over line-delimited JSON.

One message per line, each a JSON object with a "kind" field:

  client -> server
    {"kind": "reset", "day": "20200203", "start_index": 0,
     "horizon_s": 1800, ...optional: initial_btc, target_fraction,
     trade_fraction, seed}
    {"kind": "act", "action": 0.05}

  server -> client
    {"kind": "obs",  "observation": [93 floats], "reward": r,
     "done": false, "info": {...}}
    {"kind": "done", "observation": [93 floats], "reward": r,
     "info": {"episode_reward": ..., "pnl_percent": ...,
              "obs_checksum": ..., ...}}
    {"kind": "error", "message": "..."}

Numbers serialize with full round-trip precision (shortest repr), so
values on both sides of the wire compare exactly. Semantic errors (act
before reset, act after done, bad reset arguments) get an error reply
and the session continues; undecodable lines and unknown kinds are
protocol violations that close the session after the error reply.

The checksum lets a client audit boundary fidelity: starting at reset it
is the left-to-right float64 sum of every observation entry emitted,
plus each step reward, in emission order.

Sessions are single-episode-sequential: a new reset starts the next
episode on the same connection. Each connection owns an independent
environment; frozen normalizer stats, when configured, are shared
read-only and never mutate during evaluation.
"""

from __future__ import annotations

import json
import socketserver
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

from .episode_env import EpisodeConfig, EpisodeEnv, FeeSchedule, ImpactParams, NormalizerStats, RewardParams, RunOutcome
from .errors import ProtocolError
from .eval_protocol import pnl_percent
from .snapshot_store import DayBook, load_day


@dataclass(frozen=True)
class TrainDefaults:
    """Trainer-side hyperparameter defaults surfaced as configuration."""

    learning_rate: float = 1e-4
    clip_range: float = 0.20
    gamma: float = 0.995
    gae_lambda: float = 0.95
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    max_grad_norm: float = 0.5
    target_kl: float = 0.05
    total_steps: int = 10_000_000
    n_envs: int = 6

    def as_dict(self) -> dict:
        return asdict(self)


def _obs_sum(obs) -> float:
    s = 0.0
    for v in obs:
        s += float(v)
    return s


class EnvAdapter:
    """In-process step/reset adapter over one day directory.

    Action space is a scalar in [-1, 1]; clipping to [0, trade_fraction]
    happens core-side. Observations are 93-vectors; info carries the fill
    record. Deterministic given identical reset arguments.
    """

    def __init__(self, data_dir=None,
                 impact: ImpactParams | None = None,
                 fees: FeeSchedule | None = None,
                 reward_params: RewardParams | None = None,
                 stats: NormalizerStats | None = None) -> None:
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self.impact = impact if impact is not None else ImpactParams()
        self.fees = fees if fees is not None else FeeSchedule()
        self.reward_params = (reward_params if reward_params is not None
                              else RewardParams())
        self.stats = stats
        self._days: dict[str, DayBook] = {}
        self._env: EpisodeEnv | None = None

    def _load_day(self, date: str) -> DayBook:
        if date not in self._days:
            if self.data_dir is None:
                raise ProtocolError("no data directory configured")
            for suffix in (".lobd", ".csv"):
                path = self.data_dir / f"{date}{suffix}"
                if path.exists():
                    day, _ = load_day(path)
                    self._days[date] = day
                    break
            else:
                raise ProtocolError(f"no day file for {date}")
        return self._days[date]

    def add_day(self, day: DayBook) -> None:
        """Register an in-memory day (tests, synthetic data)."""
        self._days[day.date] = day

    def reset(self, day: str, start_index: int, horizon_s: int,
              initial_btc: float = 1.0, target_fraction: float = 0.0,
              trade_fraction: float = 0.1, seed: int = 0):
        book = self._load_day(day)
        try:
            cfg = EpisodeConfig(day=book, start_index=int(start_index),
                                horizon_s=int(horizon_s),
                                initial_btc=float(initial_btc),
                                target_fraction=float(target_fraction),
                                trade_fraction=float(trade_fraction),
                                seed=int(seed))
            self._env = EpisodeEnv(cfg, self.impact, self.fees,
                                   self.reward_params, stats=self.stats)
        except ValueError as exc:
            raise ProtocolError(str(exc)) from exc
        obs = self._env.reset()
        info = {"steps": self._env.steps,
                "arrival_mid": self._env.arrival_mid}
        return obs, info

    def step(self, action: float):
        if self._env is None:
            raise ProtocolError("act before reset")
        if self._env.done:
            raise ProtocolError("act on a finished episode")
        res = self._env.step(action)
        info = {"filled_qty": res.info["fill"].filled_qty,
                "fee_paid": res.info["fill"].fee_paid,
                "flags": res.info["flags"]}
        if res.done:
            env = self._env
            outcome = RunOutcome(
                initial_btc=env.cfg.initial_btc, cash=env.cash,
                inventory=env.inventory, fills=env.fills,
                cum_reward=env.cum_reward, arrival_mid=env.arrival_mid,
                final_mid=env.final_mid)
            info.update({
                "episode_reward": env.cum_reward,
                "pnl_percent": pnl_percent(outcome),
                "cash": env.cash,
                "inventory": env.inventory,
                "fills": env.fills,
                "residual_fraction": env.residual_fraction,
            })
        return res.observation, res.reward, res.done, info


class BridgeSession:
    """Message-level protocol handler around one EnvAdapter."""

    def __init__(self, adapter: EnvAdapter) -> None:
        self.adapter = adapter
        self._checksum = 0.0

    def handle_line(self, line: str) -> tuple[dict, bool]:
        """Reply to one wire line; the flag asks to close the session."""
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            return {"kind": "error", "message": f"bad JSON: {exc}"}, True
        if not isinstance(msg, dict):
            return {"kind": "error", "message": "message must be an object"}, True
        kind = msg.get("kind")
        if kind == "reset":
            return self._handle_reset(msg), False
        if kind == "act":
            return self._handle_act(msg), False
        return {"kind": "error", "message": f"unknown kind {kind!r}"}, True

    def _handle_reset(self, msg: dict) -> dict:
        try:
            fields = {k: msg[k] for k in
                      ("day", "start_index", "horizon_s") if k in msg}
            if len(fields) != 3:
                raise ProtocolError("reset needs day, start_index, horizon_s")
            for opt in ("initial_btc", "target_fraction", "trade_fraction",
                        "seed"):
                if opt in msg:
                    fields[opt] = msg[opt]
            obs, info = self.adapter.reset(**fields)
        except (ProtocolError, ValueError, TypeError) as exc:
            return {"kind": "error", "message": str(exc)}
        self._checksum = _obs_sum(obs)
        return {"kind": "obs", "observation": [float(v) for v in obs],
                "reward": 0.0, "done": False, "info": info}

    def _handle_act(self, msg: dict) -> dict:
        if "action" not in msg or not isinstance(msg["action"], (int, float)):
            return {"kind": "error", "message": "act needs a numeric action"}
        try:
            obs, reward, done, info = self.adapter.step(float(msg["action"]))
        except ProtocolError as exc:
            return {"kind": "error", "message": str(exc)}
        # running left-to-right sum: a streaming client adds value by value
        c = self._checksum
        for v in obs:
            c += float(v)
        self._checksum = c + float(reward)
        if done:
            info = dict(info)
            info["obs_checksum"] = self._checksum
            return {"kind": "done", "observation": [float(v) for v in obs],
                    "reward": float(reward), "info": info}
        return {"kind": "obs", "observation": [float(v) for v in obs],
                "reward": float(reward), "done": False, "info": info}


def _encode(reply: dict) -> str:
    return json.dumps(reply, separators=(",", ":")) + "\n"


def serve_stdio(adapter: EnvAdapter, stdin=None, stdout=None) -> None:
    """Serve one session over stdio until EOF or protocol violation."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    session = BridgeSession(adapter)
    for line in stdin:
        if not line.strip():
            continue
        reply, close = session.handle_line(line)
        stdout.write(_encode(reply))
        stdout.flush()
        if close:
            break


def serve_socket(adapter_factory, host: str = "127.0.0.1",
                 port: int = 7421) -> None:
    """Serve one session per TCP connection; blocks forever."""

    class Handler(socketserver.StreamRequestHandler):
        def handle(self) -> None:
            session = BridgeSession(adapter_factory())
            for raw in self.rfile:
                line = raw.decode("utf-8")
                if not line.strip():
                    continue
                reply, close = session.handle_line(line)
                self.wfile.write(_encode(reply).encode("utf-8"))
                self.wfile.flush()
                if close:
                    break

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    with Server((host, port), Handler) as server:
        server.serve_forever()
