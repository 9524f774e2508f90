"""Trade execution with frictions, shared by environments and baselines.

One bar, one call: sells settle first at (close - half_spread) so their
proceeds can fund purchases, then buys fill at (close + half_spread) in
ascending ticker order, each clipped so cash never goes negative.  Shares
are integers throughout; there is no margin and no shorting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CostModel:
    """Trading frictions.

    flat_fee: currency charged per executed trade (per asset, per side).
    per_share_rate: fraction of trade notional (at the execution price).
    half_spread: currency added to buy fills / subtracted from sell fills,
    per share.
    """

    flat_fee: float = 0.0
    per_share_rate: float = 0.0
    half_spread: float = 0.0

    def __post_init__(self):
        if min(self.flat_fee, self.per_share_rate, self.half_spread) < 0:
            raise ValueError("cost model fields must be >= 0")


ZERO_COSTS = CostModel()


@dataclass(frozen=True)
class Fill:
    """Outcome of executing one bar's share deltas."""

    balance: float
    holdings: np.ndarray
    executed: np.ndarray      # signed shares actually traded per asset
    fees: float               # flat fees + notional fees
    spread_cost: float        # |shares| * half_spread summed over trades


def execute(balance: float, holdings: np.ndarray, prices: np.ndarray,
            delta: np.ndarray, costs: CostModel) -> Fill:
    """Apply a signed share-delta vector to a portfolio at the given closes.

    Sells are clipped to current holdings.  Buys are processed in ascending
    ticker (array) order and greedily clipped so the cash balance stays
    non-negative.  A sell whose net proceeds would drive the balance
    negative (flat fee exceeding gross proceeds) is skipped rather than
    executed at a cash loss.
    """
    balance = float(balance)
    holdings = holdings.astype(np.int64, copy=True)
    executed = np.zeros(len(holdings), dtype=np.int64)
    fees = 0.0
    spread_cost = 0.0

    sell_px = prices - costs.half_spread
    buy_px = prices + costs.half_spread

    # sells first: proceeds fund same-bar purchases
    for i in range(len(holdings)):
        qty = int(min(-delta[i], holdings[i])) if delta[i] < 0 else 0
        if qty <= 0:
            continue
        gross = qty * sell_px[i]
        fee = costs.flat_fee + costs.per_share_rate * abs(gross)
        if balance + gross - fee < 0.0:
            continue
        balance += gross - fee
        holdings[i] -= qty
        executed[i] = -qty
        fees += fee
        spread_cost += qty * costs.half_spread

    for i in range(len(holdings)):
        qty = int(delta[i]) if delta[i] > 0 else 0
        if qty <= 0:
            continue
        unit = buy_px[i] * (1.0 + costs.per_share_rate)
        affordable = balance - costs.flat_fee
        if affordable > 0.0 and unit > 0.0:
            cap = int(math.floor(affordable / unit))
            # floor can overshoot by one ulp; walk down until affordable
            while cap > 0 and cap * buy_px[i] + costs.flat_fee + \
                    costs.per_share_rate * cap * buy_px[i] > balance:
                cap -= 1
            qty = min(qty, cap)
        else:
            qty = 0
        if qty <= 0:
            continue
        notional = qty * buy_px[i]
        fee = costs.flat_fee + costs.per_share_rate * notional
        balance -= notional + fee
        holdings[i] += qty
        executed[i] = qty
        fees += fee
        spread_cost += qty * costs.half_spread

    return Fill(balance=balance, holdings=holdings, executed=executed,
                fees=fees, spread_cost=spread_cost)


def weights_to_shares(weights: np.ndarray, value: float,
                      prices: np.ndarray) -> np.ndarray:
    """Convert simplex weights into integer share targets: floor(w*v / p)."""
    return np.floor(weights * value / prices).astype(np.int64)
