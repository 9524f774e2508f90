"""Time-driven market MDP over a :class:`MarketFrame`.

Three task variants share one simulator:

* ``single_stock``  - one asset, discrete or continuous share actions.
* ``multi_stock``   - n assets, continuous share-vector actions.
* ``portfolio``     - n assets, simplex weight actions (full rebalance).

A step executes the (possibly gate-overridden) trades at the current bar's
close with frictions, advances one bar, and pays the configured reward on
the resulting portfolio-value transition.  The final bar hosts one last
step with prices held fixed, so an episode over a frame slice of length L
(after warm-up) produces exactly L steps and L+1 portfolio values.

The turbulence gate estimates the Mahalanobis distance of today's asset
returns from their trailing history; when it spikes above the threshold,
buying halts and holdings are liquidated at ceil(h/2) shares per asset per
gated step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg

from .errors import (
    ActionShapeMismatch,
    EpisodeDone,
    MissingIndicator,
    NonFiniteAction,
    NonPositiveValue,
    SeriesTooShort,
    SingularCovariance,
    TaskShapeMismatch,
    WindowTooShort,
)
from .execution import CostModel, execute, weights_to_shares
from .market_data import _GRANULARITY_STEP, PERIODS_PER_YEAR, MarketFrame

TASKS = ("single_stock", "multi_stock", "portfolio")
ACTION_VARIANTS = ("discrete", "continuous", "simplex")
REWARD_VARIANTS = ("delta_value", "log_return", "trailing_sharpe")

REQUIRED_INDICATORS = ("macd", "rsi")

# keeps delta-value rewards O(1) for typical capital scales
DEFAULT_DELTA_VALUE_SCALING = 1e-4


@dataclass(frozen=True)
class PortfolioState:
    """Cash, integer holdings, and the closes they are marked at."""

    step_index: int
    balance: float
    holdings: np.ndarray
    prices: np.ndarray

    def __post_init__(self):
        if self.balance < 0:
            raise ValueError("balance must be >= 0 (no margin)")
        if (self.holdings < 0).any():
            raise ValueError("holdings must be >= 0 (no shorting)")

    @property
    def value(self) -> float:
        # recomputed on every access, never cached
        return float(self.balance + self.holdings @ self.prices)


@dataclass(frozen=True)
class ActionSpec:
    """Action-space description.

    discrete:   integer share count in {-k, ..., k} (single asset).
    continuous: raw vector in [-1, 1]^n, mapped to shares via rint(raw * k).
    simplex:    any finite vector, normalized to weights by a shifted
                softmax inside the environment.
    """

    variant: str
    dimension: int
    k: int | None = None

    def __post_init__(self):
        if self.variant not in ACTION_VARIANTS:
            raise ValueError(f"unknown action variant {self.variant!r}")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.variant in ("discrete", "continuous"):
            if self.k is None or self.k < 1:
                raise ValueError(f"{self.variant} actions need k >= 1")


@dataclass(frozen=True)
class RewardSpec:
    """Reward shaping: which transition functional, a window, and a scale."""

    variant: str = "delta_value"
    scaling: float | None = None
    window: int = 63

    def __post_init__(self):
        if self.variant not in REWARD_VARIANTS:
            raise ValueError(f"unknown reward variant {self.variant!r}")
        if self.scaling is None:
            default = DEFAULT_DELTA_VALUE_SCALING if self.variant == "delta_value" else 1.0
            object.__setattr__(self, "scaling", default)
        if self.scaling <= 0:
            raise ValueError("scaling must be > 0")
        if self.variant == "trailing_sharpe" and self.window < 2:
            raise ValueError("trailing_sharpe window must be >= 2")


@dataclass(frozen=True)
class TurbulenceGate:
    """Risk gate on the turbulence index (Mahalanobis distance of returns)."""

    enabled: bool = False
    lookback: int = 252
    threshold: float = 100.0
    ridge: float | None = None   # None -> 1e-8 * trace(cov)/n

    def __post_init__(self):
        if self.lookback < 3:
            raise ValueError("lookback must be >= 3")
        if self.threshold <= 0:
            raise ValueError("threshold must be > 0")
        if self.ridge is not None and self.ridge < 0:
            raise ValueError("ridge must be >= 0")


@dataclass(frozen=True)
class StepOutcome:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EnvConfig:
    """Bundle of everything (besides the frame) needed to build an env."""

    task: str
    action: ActionSpec
    reward: RewardSpec
    costs: CostModel
    gate: TurbulenceGate
    initial_capital: float

    def build(self, frame: MarketFrame) -> "TradingEnv":
        return make_env(frame, self.task, self.action, self.reward,
                        self.costs, self.gate, self.initial_capital)


# --- reward functions -------------------------------------------------------


def reward_delta_value(v: float, v_next: float) -> float:
    """Change of portfolio value across one step."""
    return v_next - v


def reward_log_return(v: float, v_next: float) -> float:
    """Log return of portfolio value across one step."""
    if v <= 0:
        raise NonPositiveValue(v)
    if v_next <= 0:
        raise NonPositiveValue(v_next)
    return math.log(v_next / v)


def reward_trailing_sharpe(values, window: int) -> float:
    """Sharpe of the last ``window`` value differences (sample std).

    Returns 0 when the differences have zero variance.
    """
    diffs = np.diff(np.asarray(values, dtype=np.float64))[-window:]
    if len(diffs) < 2:
        raise WindowTooShort(len(diffs))
    std = diffs.std(ddof=1)
    if std == 0.0:
        return 0.0
    return float(diffs.mean() / std)


# --- turbulence -------------------------------------------------------------


def regularized_covariance(history: np.ndarray, ridge: float | None = None):
    """Sample covariance of history rows plus a ridge on the diagonal.

    ``ridge=None`` picks 1e-8 * trace / n; pass 0 to disable regularization.
    """
    history = np.atleast_2d(np.asarray(history, dtype=np.float64))
    n = history.shape[1]
    cov = np.atleast_2d(np.cov(history, rowvar=False, ddof=1))
    if ridge is None:
        ridge = 1e-8 * float(np.trace(cov)) / n
    return cov + ridge * np.eye(n), ridge


def compute_turbulence(history: np.ndarray, current: np.ndarray,
                       ridge: float | None = None) -> float:
    """Mahalanobis distance of ``current`` returns from their history.

    ``history`` is a lookback x n return matrix, ``current`` the n-vector of
    this period's returns.  The covariance is ridge-regularized unless
    ``ridge=0`` is forced, in which case a singular covariance raises.
    """
    history = np.atleast_2d(np.asarray(history, dtype=np.float64))
    current = np.asarray(current, dtype=np.float64).reshape(-1)
    rows, n = history.shape
    if current.shape != (n,):
        raise ValueError(f"current has shape {current.shape}, want ({n},)")
    if rows < n + 2:
        raise ValueError(f"need at least n + 2 = {n + 2} history rows, got {rows}")
    if not (np.isfinite(history).all() and np.isfinite(current).all()):
        raise ValueError("inputs must be finite")

    cov, _ = regularized_covariance(history, ridge)
    dev = current - history.mean(axis=0)
    if not dev.any():
        return 0.0
    try:
        factor = scipy.linalg.cho_factor(cov, lower=True)
        sol = scipy.linalg.cho_solve(factor, dev)
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError):
        raise SingularCovariance() from None
    return max(float(dev @ sol), 0.0)


def apply_turbulence_gate(action: np.ndarray, turbulence: float,
                          gate: TurbulenceGate, state: PortfolioState) -> np.ndarray:
    """Override a share-delta action when the market is turbulent.

    Below the threshold the action passes through untouched.  At or above
    it, all buying is blocked and every asset is scheduled for gradual
    liquidation: sell ceil(holdings / 2) this step (so a 10-share position
    unwinds 5, 3, 1, 1).
    """
    if turbulence < gate.threshold:
        return action
    return -((state.holdings + 1) // 2)


# --- the environment --------------------------------------------------------


class TradingEnv:
    """Episodic simulator; drive it with reset()/step().

    Instances are single-threaded (call reset/step sequentially); the
    underlying frame is immutable, so any number of envs may share it.
    """

    def __init__(self, frame: MarketFrame, task: str, action: ActionSpec,
                 reward: RewardSpec, costs: CostModel, gate: TurbulenceGate,
                 initial_capital: float):
        self.frame = frame
        self.task = task
        self.action_spec = action
        self.reward_spec = reward
        self.costs = costs
        self.gate = gate
        self.initial_capital = float(initial_capital)

        self.n = frame.n_assets
        self._close = frame.closes()
        self._macd = frame.indicator("macd")
        self._rsi = frame.indicator("rsi")
        self.warm_up = gate.lookback + 1 if gate.enabled else 0
        self._t0 = self.warm_up
        self._T = frame.n_steps

        self._balance = 0.0
        self._holdings = np.zeros(self.n, dtype=np.int64)
        self._t = self._t0
        self._done = True
        self._values: list[float] = []
        self._trace: list[dict] = []

    # --- metadata used by agents and backtests

    @property
    def observation_size(self) -> int:
        return 1 + 4 * self.n

    @property
    def action_kind(self) -> str:
        return "discrete" if self.action_spec.variant == "discrete" else "box"

    @property
    def actions(self) -> list:
        if self.action_spec.variant != "discrete":
            raise AttributeError("actions is only defined for discrete variants")
        k = self.action_spec.k
        return list(range(-k, k + 1))

    @property
    def action_dim(self) -> int:
        return self.n

    @property
    def episode_length(self) -> int:
        return self._T - self.warm_up

    @property
    def periods_per_year(self) -> float:
        return PERIODS_PER_YEAR[self.frame.granularity]

    def state(self) -> PortfolioState:
        return PortfolioState(self._t, self._balance, self._holdings.copy(),
                              self._close[self._t].copy())

    def curve_timestamps(self) -> pd.DatetimeIndex:
        """Timestamps for the episode value curve (length episode_length + 1).

        The terminal step trades on the last bar and is marked one
        granularity step past it, keeping timestamps strictly increasing.
        """
        ts = self.frame.timestamps
        step = _GRANULARITY_STEP[self.frame.granularity]
        return ts[self._t0:].append(pd.DatetimeIndex([ts[-1] + step]))

    # --- episode control

    def reset(self) -> np.ndarray:
        self._balance = self.initial_capital
        self._holdings = np.zeros(self.n, dtype=np.int64)
        self._t = self._t0
        self._done = False
        self._values = [self.initial_capital]
        self._trace = [self._trace_row(0, self.frame.timestamps[self._t0],
                                       0.0, float("nan"))]
        return self._observation()

    def step(self, action) -> StepOutcome:
        if self._done:
            raise EpisodeDone()
        t = self._t
        prices = self._close[t]
        state = PortfolioState(t, self._balance, self._holdings.copy(), prices.copy())
        v = state.value

        delta = self._interpret_action(action, v, prices)

        turbulence = float("nan")
        gate_triggered = False
        if self.gate.enabled:
            turbulence = self._turbulence_at(t)
            gated = apply_turbulence_gate(delta, turbulence, self.gate, state)
            gate_triggered = gated is not delta
            delta = gated

        fill = execute(self._balance, self._holdings, prices, delta, self.costs)
        self._balance = fill.balance
        self._holdings = fill.holdings

        last = t == self._T - 1
        t_next = t if last else t + 1
        self._t = t_next
        self._done = last
        v_next = float(self._balance + self._holdings @ self._close[t_next])

        self._values.append(v_next)
        reward = self._reward(v, v_next)

        step_no = len(self._values) - 1
        ts = self.frame.timestamps
        stamp = (ts[-1] + _GRANULARITY_STEP[self.frame.granularity]) if last else ts[t_next]
        self._trace.append(self._trace_row(step_no, stamp, reward, turbulence))

        info = {
            "executed": fill.executed,
            "fees": fill.fees,
            "spread_cost": fill.spread_cost,
            "turbulence": turbulence,
            "gate_triggered": gate_triggered,
            "balance": self._balance,
            "value": v_next,
        }
        return StepOutcome(self._observation(), reward, last, info)

    def values(self) -> np.ndarray:
        """Portfolio values recorded so far this episode (v_0 first)."""
        return np.asarray(self._values, dtype=np.float64)

    def trace_rows(self) -> list:
        return list(self._trace)

    # --- internals

    def _trace_row(self, step_no, stamp, reward, turbulence) -> dict:
        return {
            "step": step_no,
            "timestamp": stamp,
            "balance": self._balance,
            "value": self._values[-1],
            "reward": reward,
            "turbulence": turbulence,
            "holdings": self._holdings.copy(),
        }

    def _observation(self) -> np.ndarray:
        t = self._t
        return np.concatenate((
            np.array([self._balance]),
            self._holdings.astype(np.float64),
            self._close[t],
            self._macd[t],
            self._rsi[t],
        ))

    def _interpret_action(self, action, value: float, prices: np.ndarray) -> np.ndarray:
        spec = self.action_spec
        if spec.variant == "discrete":
            arr = np.asarray(action, dtype=np.float64).reshape(-1)
            if arr.size != 1:
                raise ActionShapeMismatch(f"discrete action must be a scalar, got size {arr.size}")
            if not np.isfinite(arr[0]):
                raise NonFiniteAction()
            a = arr[0]
            if a != round(a) or abs(a) > spec.k:
                raise ActionShapeMismatch(
                    f"discrete action must be an integer in [-{spec.k}, {spec.k}], got {a}")
            return np.array([int(a)], dtype=np.int64)

        arr = np.asarray(action, dtype=np.float64).reshape(-1)
        if arr.size != self.n:
            raise ActionShapeMismatch(f"action has size {arr.size}, want {self.n}")
        if not np.isfinite(arr).all():
            raise NonFiniteAction()

        if spec.variant == "continuous":
            raw = np.clip(arr, -1.0, 1.0)
            return np.rint(raw * spec.k).astype(np.int64)

        # simplex: shifted softmax makes any finite vector a legal action
        shifted = np.exp(arr - arr.max())
        weights = shifted / shifted.sum()
        target = weights_to_shares(weights, value, prices)
        return target - self._holdings

    def _turbulence_at(self, t: int) -> float:
        look = self.gate.lookback
        window = self._close[t - look - 1: t + 1]
        rets = window[1:] / window[:-1] - 1.0
        return compute_turbulence(rets[:-1], rets[-1], self.gate.ridge)

    def _reward(self, v: float, v_next: float) -> float:
        spec = self.reward_spec
        if spec.variant == "delta_value":
            raw = reward_delta_value(v, v_next)
        elif spec.variant == "log_return":
            raw = reward_log_return(v, v_next)
        else:
            diffs_available = len(self._values) - 1
            if min(diffs_available, spec.window) < 2:
                return 0.0
            raw = reward_trailing_sharpe(self._values, spec.window)
        return raw * spec.scaling


def make_env(frame: MarketFrame, task: str, action: ActionSpec,
             reward: RewardSpec, costs: CostModel, gate: TurbulenceGate,
             initial_capital: float) -> TradingEnv:
    """Validate a task/frame/action combination and build the simulator.

    Pairings: single_stock takes discrete or continuous actions over one
    asset; multi_stock takes continuous share vectors; portfolio takes
    simplex weights.
    """
    if task not in TASKS:
        raise TaskShapeMismatch(f"unknown task {task!r}")
    n = frame.n_assets
    if task == "single_stock" and n != 1:
        raise TaskShapeMismatch(f"single_stock requires exactly 1 ticker, frame has {n}")
    allowed = {
        "single_stock": ("discrete", "continuous"),
        "multi_stock": ("continuous",),
        "portfolio": ("simplex",),
    }[task]
    if action.variant not in allowed:
        raise TaskShapeMismatch(f"task {task!r} supports {allowed}, got {action.variant!r}")
    if action.dimension != n:
        raise TaskShapeMismatch(f"action dimension {action.dimension} != {n} assets")
    if initial_capital <= 0:
        raise ValueError("initial_capital must be > 0")
    for name in REQUIRED_INDICATORS:
        if name not in frame.indicators:
            raise MissingIndicator(name)
    if gate.enabled:
        # the turbulence estimator sees exactly `lookback` return rows and
        # needs n + 2 of them for a sample covariance it can factor
        if gate.lookback < n + 2:
            raise ValueError(f"gate lookback must be >= n + 2 = {n + 2}")
        if frame.n_steps - (gate.lookback + 1) < 2:
            raise SeriesTooShort(gate.lookback + 3, frame.n_steps)
    return TradingEnv(frame, task, action, reward, costs, gate, initial_capital)


def write_episode_trace(rows: list, tickers, path) -> None:
    """Write an episode trace CSV: step, timestamp, balance, value, reward,
    turbulence, then one holdings column per ticker."""
    cols = ["step", "timestamp", "balance", "value", "reward", "turbulence"]
    cols += [f"h_{t}" for t in tickers]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            turb = row["turbulence"]
            cells = [
                str(row["step"]),
                row["timestamp"].isoformat(),
                repr(float(row["balance"])),
                repr(float(row["value"])),
                repr(float(row["reward"])),
                "" if isinstance(turb, float) and math.isnan(turb) else repr(float(turb)),
                *[str(int(h)) for h in row["holdings"]],
            ]
            fh.write(",".join(cells) + "\n")
