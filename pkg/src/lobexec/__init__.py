"""Deterministic limit-order-book replay execution simulator.

Replays depth-20 order book snapshots, simulates sell-side liquidation with
taker fees and transient price impact, compares policies against schedule
baselines, and runs a per-day statistical evaluation pipeline on the gaps.
"""

from ._backend import BACKEND
from .errors import ConfigError, DataError, LobexecError, ProtocolError, StatsError

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "DataError",
    "LobexecError",
    "ProtocolError",
    "StatsError",
    "__version__",
]
