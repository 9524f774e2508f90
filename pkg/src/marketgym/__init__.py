"""marketgym: market MDP environments, from-scratch DRL agents, and
backtesting over OHLCV bar data.

Three layers: market_data turns CSVs into aligned frames with indicators,
trading_env simulates single-stock / multi-stock / portfolio tasks with
realistic frictions, and agents/baselines/backtest train, evaluate, and
compare policies.  The cli module wires it all behind a config file.
"""

from .backtest import (
    ComparisonTable,
    EquityCurve,
    MetricsReport,
    annualized_return,
    annualized_std,
    compare,
    compute_metrics,
    max_drawdown,
    run_backtest,
    sharpe_ratio,
)
from .baselines import (
    StrategyConfig,
    mean_variance_weights,
    min_variance_weights,
    momentum_ranking,
    run_strategy,
)
from .errors import MarketGymError
from .execution import CostModel, execute, weights_to_shares
from .market_data import (
    Bar,
    MarketFrame,
    SplitSpec,
    compute_macd,
    compute_rsi,
    ingest_csv,
    resample,
    rolling_windows,
    split,
    write_canonical_csv,
)
from .trading_env import (
    ActionSpec,
    EnvConfig,
    PortfolioState,
    RewardSpec,
    StepOutcome,
    TradingEnv,
    TurbulenceGate,
    apply_turbulence_gate,
    compute_turbulence,
    make_env,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "MarketGymError",
    "Bar",
    "MarketFrame",
    "SplitSpec",
    "ingest_csv",
    "write_canonical_csv",
    "compute_macd",
    "compute_rsi",
    "resample",
    "split",
    "rolling_windows",
    "CostModel",
    "execute",
    "weights_to_shares",
    "ActionSpec",
    "RewardSpec",
    "TurbulenceGate",
    "EnvConfig",
    "PortfolioState",
    "StepOutcome",
    "TradingEnv",
    "make_env",
    "compute_turbulence",
    "apply_turbulence_gate",
    "StrategyConfig",
    "run_strategy",
    "min_variance_weights",
    "mean_variance_weights",
    "momentum_ranking",
    "EquityCurve",
    "MetricsReport",
    "ComparisonTable",
    "run_backtest",
    "compute_metrics",
    "compare",
    "annualized_return",
    "annualized_std",
    "sharpe_ratio",
    "max_drawdown",
]
