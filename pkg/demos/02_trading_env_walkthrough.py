"""
Inside a trading environment episode
====================================

A TradingEnv is a gym-style loop over historical bars: observe, trade,
pay frictions, mark to market.  This script steps one manually and
re-derives the account value by hand, then shows the turbulence gate
forcing a liquidation when returns turn statistically abnormal.
"""

import numpy as np

from marketgym import (
    ActionSpec,
    CostModel,
    RewardSpec,
    TurbulenceGate,
    compute_macd,
    compute_rsi,
    compute_turbulence,
    make_env,
)
from marketgym.synth import generate_synthetic_frame

frame = compute_rsi(compute_macd(generate_synthetic_frame(n_assets=1, n_days=60, seed=3)))

# single_stock with a discrete action space: trade an integer number of
# shares in {-k, ..., +k} each bar.  Fees: 0.1% of traded notional.
env = make_env(
    frame,
    task="single_stock",
    action=ActionSpec("discrete", dimension=1, k=10),
    reward=RewardSpec("delta_value", scaling=1.0),  # raw currency, unscaled
    costs=CostModel(per_share_rate=0.001),
    gate=TurbulenceGate(enabled=False),
    initial_capital=10_000.0,
)

obs = env.reset()
print("observation size:", env.observation_size)
print("episode length:  ", env.episode_length, "steps")
print("actions:         ", env.actions[:3], "...", env.actions[-3:])

# Buy 10 shares on the first bar and hold.  The observation is
# [balance, holdings, close, macd, rsi], so the account can be read
# straight out of it (the close shown is the next bar's).
outcome = env.step(10)
balance, shares, price = outcome.observation[:3]
print("after buy: balance %.2f, shares %.0f, next close %.2f" % (balance, shares, price))

# Replay the fill by hand: 10 shares at the bar's close plus 0.1% fee.
fill_price = frame.closes()[0, 0]
expected_balance = 10_000.0 - 10 * fill_price * 1.001
print("hand-computed balance %.2f (match: %s)"
      % (expected_balance, np.isclose(balance, expected_balance)))

# Finish the episode doing nothing.  Rewards are per-step changes in
# account value, so they telescope back to the total profit and the
# curve env.values() keeps must agree with balance + shares * price.
rewards = [outcome.reward]
while True:
    outcome = env.step(0)
    rewards.append(outcome.reward)
    if outcome.done:
        break
values = env.values()
print("curve: %d points, start %.2f, end %.2f" % (len(values), values[0], values[-1]))
print("sum of rewards %.6f == final - initial %.6f"
      % (sum(rewards), values[-1] - values[0]))

# The turbulence index is the Mahalanobis distance of today's return
# vector from a trailing window of returns.  When it crosses the
# threshold, the environment overrides the action and liquidates.
multi = compute_rsi(compute_macd(generate_synthetic_frame(n_assets=4, n_days=120, seed=9)))
closes = multi.closes()
rets = closes[1:] / closes[:-1] - 1.0
scores = [compute_turbulence(rets[t - 30:t], rets[t]) for t in range(30, len(rets))]
print("turbulence over 30-day window: median %.2f, max %.2f"
      % (np.median(scores), np.max(scores)))

gated = make_env(
    multi,
    task="multi_stock",
    action=ActionSpec("continuous", dimension=4, k=5),
    reward=RewardSpec("delta_value"),
    costs=CostModel(),
    gate=TurbulenceGate(enabled=True, lookback=30, threshold=np.median(scores)),
    initial_capital=10_000.0,
)
gated.reset()
forced = 0
buy_everything = np.ones(4)
while True:
    outcome = gated.step(buy_everything)
    forced += outcome.info["turbulence"] > gated.gate.threshold
    if outcome.done:
        break
print("gate with threshold at the median: %d of %d steps forced flat"
      % (forced, gated.episode_length))
