"""Conventional strategies used as comparison baselines.

Five variants: buy-and-hold, equal-weighted, momentum, mean-variance, and
min-variance.  All of them trade integer shares through the same execution
engine as the environments, so frictions are identical and Sharpe
comparisons are apples-to-apples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .backtest import EquityCurve
from .errors import InsufficientHistory, SingularCovariance
from .execution import CostModel, execute, weights_to_shares
from .market_data import _GRANULARITY_STEP, PERIODS_PER_YEAR, MarketFrame
from .trading_env import regularized_covariance

STRATEGY_VARIANTS = (
    "buy_and_hold",
    "equal_weighted",
    "momentum",
    "mean_variance",
    "min_variance",
)

PGD_ITERATIONS = 500
# step = 1 / (2 trace) <= 1 / (2 lambda_max), so every step is a descent
# step; smaller scales converge too slowly on ill-conditioned covariances
PGD_STEP_SCALE = 1.0
# an early objective-change stop parks the iterate ~1e-4 away from the
# optimum in weight space; the full budget is cheap and lands at ~1e-8
PGD_TOLERANCE = 0.0


@dataclass(frozen=True)
class StrategyConfig:
    """Baseline selection plus its knobs; unused fields are ignored.

    rebalance_every=None resolves per variant: momentum rebalances every
    21 steps (monthly), the others every step; buy-and-hold ignores it.
    """

    variant: str
    rebalance_every: int | None = None
    lookback: int = 63
    top_k: int | None = None           # None -> ceil(n / 3)
    risk_aversion: float = 1.0
    estimation_window: int = 252
    ridge: float | None = None

    def __post_init__(self):
        if self.variant not in STRATEGY_VARIANTS:
            raise ValueError(f"unknown strategy variant {self.variant!r}")
        if self.rebalance_every is not None and self.rebalance_every < 1:
            raise ValueError("rebalance_every must be >= 1")
        if self.lookback < 1:
            raise ValueError("lookback must be >= 1")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.risk_aversion < 0:
            raise ValueError("risk_aversion must be >= 0")
        if self.estimation_window < 3:
            raise ValueError("estimation_window must be >= 3")

    def cadence(self) -> int:
        if self.rebalance_every is not None:
            return self.rebalance_every
        return 21 if self.variant == "momentum" else 1


def validate_weights(weights: np.ndarray) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if (w < 0).any():
        raise ValueError("weights must be nonnegative")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights sum to {w.sum()!r}, want 1")
    return w


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort method)."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho_candidates = u + (1.0 - css) / np.arange(1, len(v) + 1) > 0
    rho = int(np.nonzero(rho_candidates)[0][-1])
    theta = (1.0 - css[rho]) / (rho + 1)
    return np.maximum(v + theta, 0.0)


def _projected_gradient(objective, gradient, n: int, lipschitz: float) -> np.ndarray:
    """Minimize a convex objective over the simplex; monotone by construction."""
    w = np.full(n, 1.0 / n)
    step = PGD_STEP_SCALE / max(lipschitz, 1e-12)
    prev = objective(w)
    for _ in range(PGD_ITERATIONS):
        w_new = project_simplex(w - step * gradient(w))
        val = objective(w_new)
        slack = 1e-12 * max(1.0, abs(prev))
        assert val <= prev + slack, "projected gradient step increased the objective"
        if prev - val < PGD_TOLERANCE:
            return w_new
        w, prev = w_new, val
    return w


def _estimate_cov(returns: np.ndarray, ridge: float | None) -> np.ndarray:
    returns = np.atleast_2d(np.asarray(returns, dtype=np.float64))
    rows, n = returns.shape
    if rows < n + 2:
        raise InsufficientHistory(f"need at least n + 2 = {n + 2} return rows, got {rows}")
    cov, used_ridge = regularized_covariance(returns, ridge)
    if used_ridge == 0.0 and np.linalg.matrix_rank(cov) < n:
        raise SingularCovariance()
    return cov


def min_variance_weights(returns: np.ndarray, ridge: float | None = None) -> np.ndarray:
    """Long-only weights approximately minimizing w' Sigma w."""
    cov = _estimate_cov(returns, ridge)
    n = cov.shape[0]
    lipschitz = 2.0 * float(np.trace(cov))
    w = _projected_gradient(lambda w: float(w @ cov @ w),
                            lambda w: 2.0 * (cov @ w), n, lipschitz)
    return validate_weights(w)


def mean_variance_weights(returns: np.ndarray, risk_aversion: float,
                          ridge: float | None = None) -> np.ndarray:
    """Long-only weights approximately maximizing w'mu - lambda w'Sigma w."""
    if risk_aversion < 0:
        raise ValueError("risk_aversion must be >= 0")
    returns = np.atleast_2d(np.asarray(returns, dtype=np.float64))
    cov = _estimate_cov(returns, ridge)
    mu = returns.mean(axis=0)
    n = cov.shape[0]
    lam = risk_aversion
    lipschitz = 2.0 * lam * float(np.trace(cov)) + float(np.abs(mu).max()) + 1e-12
    w = _projected_gradient(lambda w: float(lam * (w @ cov @ w) - mu @ w),
                            lambda w: 2.0 * lam * (cov @ w) - mu, n, lipschitz)
    return validate_weights(w)


def momentum_ranking(frame: MarketFrame, t: int, lookback: int) -> list:
    """Asset indices sorted by trailing return p_t / p_{t-lookback} - 1,
    best first; ties broken by ascending ticker."""
    if t < lookback:
        raise InsufficientHistory(f"step {t} < lookback {lookback}")
    closes = frame.closes()
    rets = closes[t] / closes[t - lookback] - 1.0
    return sorted(range(frame.n_assets), key=lambda i: (-rets[i], frame.tickers[i]))


def _strategy_weights(frame: MarketFrame, config: StrategyConfig, t: int) -> np.ndarray:
    n = frame.n_assets
    v = config.variant
    if v in ("buy_and_hold", "equal_weighted"):
        return np.full(n, 1.0 / n)
    if v == "momentum":
        k = config.top_k if config.top_k is not None else math.ceil(n / 3)
        if k > n:
            raise ValueError(f"top_k {k} exceeds {n} assets")
        chosen = momentum_ranking(frame, t, config.lookback)[:k]
        w = np.zeros(n)
        w[chosen] = 1.0 / k
        return w
    closes = frame.closes()
    window = closes[t - config.estimation_window: t + 1]
    rets = window[1:] / window[:-1] - 1.0
    if v == "min_variance":
        return min_variance_weights(rets, config.ridge)
    return mean_variance_weights(rets, config.risk_aversion, config.ridge)


def strategy_warmup(config: StrategyConfig) -> int:
    if config.variant == "momentum":
        return config.lookback
    if config.variant in ("mean_variance", "min_variance"):
        return config.estimation_window
    return 0


def run_strategy(frame: MarketFrame, config: StrategyConfig, capital: float,
                 costs: CostModel) -> EquityCurve:
    """Trade the strategy over the frame and return its equity curve.

    Stepping mirrors the environment: one trade opportunity per bar, the
    final bar trades at held prices, curve length = steps + 1.
    """
    if capital <= 0:
        raise ValueError("capital must be > 0")
    closes = frame.closes()
    T = frame.n_steps
    t0 = strategy_warmup(config)
    if T - t0 < 1:
        raise InsufficientHistory(
            f"frame has {T} steps, strategy needs more than {t0}")
    cadence = config.cadence()

    balance = float(capital)
    holdings = np.zeros(frame.n_assets, dtype=np.int64)
    values = [balance]
    for s, t in enumerate(range(t0, T)):
        prices = closes[t]
        first = s == 0
        due = first if config.variant == "buy_and_hold" else s % cadence == 0
        if due:
            value = balance + holdings @ prices
            weights = _strategy_weights(frame, config, t)
            target = weights_to_shares(weights, value, prices)
            fill = execute(balance, holdings, prices, target - holdings, costs)
            balance, holdings = fill.balance, fill.holdings
        t_next = t if t == T - 1 else t + 1
        values.append(float(balance + holdings @ closes[t_next]))

    ts = frame.timestamps
    stamps = ts[t0:].append(pd.DatetimeIndex([ts[-1] + _GRANULARITY_STEP[frame.granularity]]))
    return EquityCurve(stamps, np.asarray(values), PERIODS_PER_YEAR[frame.granularity])
