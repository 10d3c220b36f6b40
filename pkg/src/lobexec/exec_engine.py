"""Market-sell settlement against the displayed book.

Orders walk the bid ladder best-first with partial fills, pay taker fees,
and leave a transient price displacement that decays exponentially
(half-life semantics). Displacement shifts prices only, never displayed
sizes, and applies to subsequent executions: the order that caused it
fills at the pre-trade displacement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from ._backend import kernels
from .snapshot_store import Snapshot, mid_price
import numpy as np

# Floor for the liquidity reference so impact never divides by zero.
LIQUIDITY_EPS = 1e-9


@dataclass(frozen=True)
class FeeSchedule:
    """Exchange fees as fractions of notional."""

    taker_fee: float = 0.001
    maker_rebate: float = 0.0

    def __post_init__(self) -> None:
        for name in ("taker_fee", "maker_rebate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 0.05:
                raise ValueError(f"{name} must be in [0, 0.05], got {v}")


@dataclass(frozen=True)
class ImpactParams:
    """Transient impact: displacement k*(q/D)^size_exponent*mid, decaying
    with the given half-life."""

    k: float = 0.3
    size_exponent: float = 0.5
    half_life_s: float = 60.0

    def __post_init__(self) -> None:
        if self.k < 0.0:
            raise ValueError("k must be >= 0")
        if not 0.0 < self.size_exponent <= 1.0:
            raise ValueError("size_exponent must be in (0, 1]")
        if self.half_life_s <= 0.0:
            raise ValueError("half_life_s must be > 0")

    def scaled(self, factor: float) -> "ImpactParams":
        """k and half-life multiplied by factor (robustness sweeps)."""
        return replace(self, k=self.k * factor, half_life_s=self.half_life_s * factor)


@dataclass(frozen=True)
class ImpactState:
    """Current signed price displacement and when it was last decayed."""

    displacement: float = 0.0
    last_update: int = 0


@dataclass(frozen=True)
class Fill:
    """Outcome of one market sell; avg_price is pre-fee, post-impact."""

    requested_qty: float
    filled_qty: float
    avg_price: float
    fee_paid: float
    levels_consumed: int


@dataclass
class PortfolioState:
    """Cash in quote currency, inventory in base units (never negative)."""

    cash: float = 0.0
    inventory: float = 0.0


def decay_impact(state: ImpactState, params: ImpactParams, now: int) -> ImpactState:
    """Decay displacement by 2^(-dt/half_life) between last_update and now."""
    if now < state.last_update:
        raise ValueError("impact clock cannot run backwards")
    dt_s = float(now - state.last_update) / 1e9
    disp = kernels.decay_displacement(state.displacement, dt_s, params.half_life_s)
    return ImpactState(displacement=disp, last_update=now)


def settle_sell(bid_px, bid_sz, mid: float, qty: float, displacement: float,
                params: ImpactParams, fees: FeeSchedule, liquidity_ref: float):
    """Array-level settlement shared by every execution path.

    Walks the displaced ladder, charges the taker fee, then updates the
    displacement from the fill's footprint and clamps it to +-mid/2.
    Returns (filled, proceeds, levels, fee, new_displacement). Keep the
    operation order in sync with the episode kernel.
    """
    filled, proceeds, levels = kernels.sell_walk(bid_px, bid_sz, qty, displacement)
    fee = fees.taker_fee * proceeds
    disp = displacement
    if filled > 0.0:
        dref = liquidity_ref
        if dref < LIQUIDITY_EPS:
            dref = LIQUIDITY_EPS
        disp = disp - params.k * math.pow(filled / dref, params.size_exponent) * mid
    lim = 0.5 * mid
    if disp < -lim:
        disp = -lim
    elif disp > lim:
        disp = lim
    return filled, proceeds, levels, fee, disp


def execute_market_sell(book: Snapshot, qty: float, state: ImpactState,
                        params: ImpactParams, fees: FeeSchedule,
                        liquidity_ref: float | None = None):
    """Settle one market sell against a snapshot.

    The caller must have decayed `state` to the book's timestamp. The
    liquidity reference defaults to the snapshot's top-20 bid-side size.
    The unfilled remainder is not retried. Returns (Fill, ImpactState).
    """
    if not math.isfinite(qty) or qty < 0.0:
        raise ValueError(f"qty must be finite and >= 0, got {qty}")
    bpx = np.array([lv.price for lv in book.bids])
    bsz = np.array([lv.size for lv in book.bids])
    if liquidity_ref is None:
        liquidity_ref = kernels.side_total(bsz)
    mid = mid_price(book)
    filled, proceeds, levels, fee, disp = settle_sell(
        bpx, bsz, mid, qty, state.displacement, params, fees, liquidity_ref)
    avg = proceeds / filled if filled > 0.0 else 0.0
    fill = Fill(requested_qty=qty, filled_qty=filled, avg_price=avg,
                fee_paid=fee, levels_consumed=levels)
    return fill, ImpactState(displacement=disp, last_update=state.last_update)


def apply_latency(decision_index: int) -> int:
    """Decisions at snapshot i settle against snapshot i+1."""
    return decision_index + 1


def mark_to_market(book: Snapshot, portfolio: PortfolioState) -> float:
    """Portfolio wealth at this snapshot's unshifted mid."""
    return portfolio.cash + portfolio.inventory * mid_price(book)
