"""Bundled synthetic market data.

Real exchange feeds are not redistributable, so the library ships a
deterministic generator instead: geometric Brownian motion with
regime-switching drift (bull / flat / bear Markov chain per asset), 30
tickers named after the Dow Jones Industrial Average constituents, 500
daily bars ending 2020-09-23.  ``DEFAULT_SEED`` is fixed; regenerating
always produces bit-identical data.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from .market_data import MarketFrame

# Dow Jones Industrial Average constituents (as of the 2020 reshuffle).
# Used as the bundled index list; bundled prices are synthetic.
DJIA_30 = (
    "AAPL", "AMGN", "AXP", "BA", "CAT", "CRM", "CSCO", "CVX", "DIS", "DOW",
    "GS", "HD", "HON", "IBM", "INTC", "JNJ", "JPM", "KO", "MCD", "MMM",
    "MRK", "MSFT", "NKE", "PG", "TRV", "UNH", "V", "VZ", "WBA", "WMT",
)

DEFAULT_SEED = 20200923
DEFAULT_END = "2020-09-23"

# annualized drift per regime and regime transition matrix (rows sum to 1)
_REGIME_DRIFT = np.array([0.35, 0.03, -0.30])
_REGIME_TRANSITION = np.array([
    [0.975, 0.015, 0.010],
    [0.030, 0.950, 0.020],
    [0.020, 0.030, 0.950],
])
_REGIME_START = np.array([0.5, 0.35, 0.15])


def generate_synthetic_frame(n_assets: int = 30, n_days: int = 500,
                             seed: int = DEFAULT_SEED,
                             end: str = DEFAULT_END) -> MarketFrame:
    """Generate the bundled synthetic daily frame.

    Each asset follows GBM with its own volatility and a three-state drift
    regime chain, plus intraday open/high/low jitter consistent with the
    OHLC invariants.
    """
    rng = np.random.default_rng(seed)
    tickers = tuple(DJIA_30[:n_assets]) if n_assets <= len(DJIA_30) else tuple(
        list(DJIA_30) + [f"SYN{i:02d}" for i in range(n_assets - len(DJIA_30))]
    )
    index = pd.bdate_range(end=end, periods=n_days, tz="UTC")

    dt = 1.0 / 252.0
    sqrt_dt = np.sqrt(dt)
    sigma = rng.uniform(0.15, 0.45, size=n_assets)
    s0 = rng.uniform(30.0, 300.0, size=n_assets)

    # per-asset regime paths
    regimes = np.empty((n_days, n_assets), dtype=np.int64)
    regimes[0] = rng.choice(3, size=n_assets, p=_REGIME_START)
    cum = _REGIME_TRANSITION.cumsum(axis=1)
    for t in range(1, n_days):
        u = rng.random(n_assets)
        regimes[t] = (u[:, None] > cum[regimes[t - 1]]).sum(axis=1)

    z = rng.standard_normal((n_days, n_assets))
    mu = _REGIME_DRIFT[regimes]
    log_ret = (mu - 0.5 * sigma**2) * dt + sigma * sqrt_dt * z
    close = s0 * np.exp(np.cumsum(log_ret, axis=0))

    prev_close = np.vstack([s0, close[:-1]])
    gap = rng.normal(0.0, 0.002, size=(n_days, n_assets))
    open_ = prev_close * (1.0 + gap)
    hi_jit = np.abs(rng.normal(0.0, 0.004, size=(n_days, n_assets)))
    lo_jit = np.abs(rng.normal(0.0, 0.004, size=(n_days, n_assets)))
    high = np.maximum(open_, close) * (1.0 + hi_jit)
    low = np.minimum(open_, close) * (1.0 - lo_jit)
    volume = np.round(np.exp(rng.normal(13.0, 0.5, size=(n_days, n_assets))))

    return MarketFrame(tickers, index, "daily", {
        "open": open_, "high": high, "low": low, "close": close,
        "volume": volume,
    })
