"""
Classical baselines and the comparison table
============================================

Trained agents are only meaningful next to the strategies practitioners
already use.  The baselines module implements buy-and-hold, equal
weighting, cross-sectional momentum, and covariance-based portfolios
(minimum variance, mean-variance); the backtest module turns any equity
curve into annualized metrics and renders side-by-side tables.
"""

import numpy as np

from marketgym import (
    CostModel,
    StrategyConfig,
    compare,
    compute_metrics,
    min_variance_weights,
    run_strategy,
)
from marketgym.synth import generate_synthetic_frame

frame = generate_synthetic_frame(n_assets=8, n_days=400, seed=12)
capital = 1_000_000.0
costs = CostModel(per_share_rate=0.001)

# Each strategy is a StrategyConfig; run_strategy executes it bar by bar
# through the same fee engine the environments use and returns an
# EquityCurve (timestamps + account values).
strategies = [
    ("Buy-Hold", StrategyConfig("buy_and_hold")),
    ("EW-Index", StrategyConfig("equal_weighted")),
    ("Momentum", StrategyConfig("momentum", lookback=63, top_k=3)),
    ("Min-Var.", StrategyConfig("min_variance", estimation_window=63)),
]

reports = []
for name, strat in strategies:
    curve = run_strategy(frame, strat, capital, costs)
    reports.append(compute_metrics(curve, strategy=name))

# Momentum and min-variance need history before they can trade, so their
# curves start later than buy-and-hold's.
for name, report in zip([s[0] for s in strategies], reports):
    print("%-8s  %s .. %s" % (name, report.date_range[0], report.date_range[1]))

# compare() lines the reports up column by column.  The same renderer
# backs the CLI's `compare` subcommand.
table = compare(reports, corner="synthetic, 8 assets")
print()
print(table.to_text())

# The covariance optimizers are also usable on their own.  For two assets
# the minimum-variance weights have a closed form; check it.
rng = np.random.default_rng(0)
returns = rng.normal(0.0, 0.02, size=(120, 2)) @ np.array([[1.0, 0.3], [0.0, 0.6]])
w = min_variance_weights(returns)
cov = np.cov(returns, rowvar=False, ddof=1)
w1 = (cov[1, 1] - cov[0, 1]) / (cov[0, 0] + cov[1, 1] - 2 * cov[0, 1])
print("optimizer weights:  ", np.round(w, 6))
print("closed-form weights:", np.round([w1, 1 - w1], 6))
