"""Shared fixtures: synthetic frames and tiny MDPs for trainer tests."""

import numpy as np
import pandas as pd
import pytest

from marketgym.market_data import MarketFrame, compute_macd, compute_rsi
from marketgym.trading_env import StepOutcome


def frame_from_closes(closes, tickers=None, granularity="daily",
                      indicators="auto", start="2020-01-01"):
    """Build a MarketFrame from a (T, n) close matrix.

    Open/high/low are set equal to close and volume is constant, which is
    enough for anything that only reads closes.  ``indicators="auto"``
    computes real MACD/RSI when the series is long enough and otherwise
    attaches constant placeholder matrices so make_env accepts the frame.
    """
    closes = np.atleast_2d(np.asarray(closes, dtype=np.float64))
    if closes.shape[0] < closes.shape[1] and closes.shape[0] == 1:
        closes = closes.T
    t, n = closes.shape
    if tickers is None:
        tickers = tuple(f"T{i:02d}" for i in range(n))
    freq = {"daily": "D", "hourly": "h", "minute": "min"}[granularity]
    index = pd.date_range(start, periods=t, freq=freq, tz="UTC")
    panels = {
        "open": closes.copy(),
        "high": closes.copy(),
        "low": closes.copy(),
        "close": closes.copy(),
        "volume": np.full((t, n), 1000.0),
    }
    frame = MarketFrame(tickers, index, granularity, panels)
    if indicators == "auto" and t > 27:
        return compute_rsi(compute_macd(frame))
    if indicators in ("auto", "flat"):
        return frame.with_indicator("macd", np.zeros((t, n))).with_indicator(
            "rsi", np.full((t, n), 50.0))
    return frame


def random_walk_closes(rng, n_assets, n_steps, s0_low=20.0, s0_high=200.0):
    s0 = rng.uniform(s0_low, s0_high, size=n_assets)
    rets = rng.normal(0.0, 0.02, size=(n_steps, n_assets))
    return s0 * np.exp(np.cumsum(rets, axis=0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --- tiny MDPs for the trainers ----------------------------------------------
#
# They follow the env protocol the agents need: observation_size,
# action_kind, actions or action_dim, reset(), step().  None of them defines
# values(), so run_eval_episode falls back to cumulative reward.


class ChainEnv:
    """Two-state deterministic chain; the action picks the next state.

    Never emits done, so the TD target always bootstraps and the learned Q
    can be compared against the infinite-horizon value-iteration optimum.
    """

    rewards = np.array([[0.5, 0.0],
                        [0.0, 1.0]])

    def __init__(self):
        self.state = 0

    observation_size = 2
    action_kind = "discrete"
    actions = [0, 1]

    def _obs(self):
        obs = np.zeros(2)
        obs[self.state] = 1.0
        return obs

    def reset(self):
        self.state = 0
        return self._obs()

    def step(self, action):
        a = int(action)
        r = float(self.rewards[self.state, a])
        self.state = a
        return StepOutcome(self._obs(), r, False, {})


def chain_optimal_q(gamma, sweeps=5000):
    """Value iteration for ChainEnv: next state equals the action index."""
    q = np.zeros((2, 2))
    for _ in range(sweeps):
        v = q.max(axis=1)
        q_new = ChainEnv.rewards + gamma * v[None, :]
        if np.abs(q_new - q).max() < 1e-14:
            q = q_new
            break
        q = q_new
    return q


class QuadraticBanditEnv:
    """Single-state continuous bandit: reward 1 - (a - 0.3)^2."""

    observation_size = 1
    action_kind = "box"
    action_dim = 1

    def reset(self):
        return np.zeros(1)

    def step(self, action):
        a = float(np.asarray(action).reshape(-1)[0])
        return StepOutcome(np.zeros(1), 1.0 - (a - 0.3) ** 2, False, {})


class TwoArmEnv:
    """Single-state two-armed bandit with noisy rewards; arm 1 is better."""

    observation_size = 1
    action_kind = "discrete"
    actions = [0, 1]

    def __init__(self, seed=0):
        self._rng = np.random.default_rng(seed)

    def reset(self):
        return np.zeros(1)

    def step(self, action):
        mean = 1.0 if int(action) == 1 else 0.0
        r = mean + 0.1 * self._rng.standard_normal()
        return StepOutcome(np.zeros(1), float(r), False, {})
