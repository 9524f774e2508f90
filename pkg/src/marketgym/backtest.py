"""Equity-curve metrics, policy/strategy evaluation, and report tables.

Five metrics per curve: final value, annualized return, annualized std,
Sharpe ratio, and maximum drawdown.  Sharpe uses simple per-period returns
with sample (n-1) std; a flat curve makes it undefined and reports render
it as "n/a" rather than 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import LayoutMismatch, ReportSchemaMismatch, WindowTooShort, ZeroVariance
from .serialize import atomic_write_text, canonical_json

REPORT_SCHEMA_VERSION = 1

METRIC_ROWS = (
    ("Initial value", "initial_value"),
    ("Final value", "final_value"),
    ("Annualized return", "annualized_return"),
    ("Annualized Std", "annualized_std"),
    ("Sharpe ratio", "sharpe"),
    ("Max drawdown", "max_drawdown"),
)


@dataclass(frozen=True)
class EquityCurve:
    """Portfolio values over time plus the annualization constant."""

    timestamps: pd.DatetimeIndex
    values: np.ndarray
    periods_per_year: float = 252.0

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        ts = pd.DatetimeIndex(self.timestamps)
        object.__setattr__(self, "timestamps", ts)
        if len(values) < 2:
            raise ValueError("curve needs at least 2 points")
        if len(ts) != len(values):
            raise ValueError(f"{len(ts)} timestamps vs {len(values)} values")
        if not (values > 0).all():
            raise ValueError("curve values must be strictly positive")
        if not ts.is_monotonic_increasing or ts.has_duplicates:
            raise ValueError("timestamps must be strictly increasing")
        if self.periods_per_year <= 0:
            raise ValueError("periods_per_year must be > 0")

    @property
    def n_periods(self) -> int:
        return len(self.values) - 1

    def returns(self) -> np.ndarray:
        v = self.values
        return v[1:] / v[:-1] - 1.0


@dataclass(frozen=True)
class MetricsReport:
    strategy: str
    initial_value: float
    final_value: float
    annualized_return: float
    annualized_std: float
    sharpe: float | None
    max_drawdown: float
    date_range: tuple | None = None
    seed: int | None = None


def annualized_return(curve: EquityCurve) -> float:
    """(v_T / v_0)^(A / T) - 1 over T periods."""
    v = curve.values
    return float((v[-1] / v[0]) ** (curve.periods_per_year / curve.n_periods) - 1.0)


def annualized_std(curve: EquityCurve) -> float:
    """Sample std of per-period simple returns, scaled by sqrt(A)."""
    if curve.n_periods < 2:
        raise WindowTooShort(curve.n_periods)
    return float(curve.returns().std(ddof=1) * math.sqrt(curve.periods_per_year))


def sharpe_ratio(curve: EquityCurve, risk_free: float = 0.0) -> float:
    """mean(r_t - rf_t) / std(r_t) * sqrt(A); raises ZeroVariance when flat."""
    if curve.n_periods < 2:
        raise WindowTooShort(curve.n_periods)
    r = curve.returns()
    std = r.std(ddof=1)
    if std == 0.0:
        raise ZeroVariance()
    per_period_rf = risk_free / curve.periods_per_year
    return float((r - per_period_rf).mean() / std * math.sqrt(curve.periods_per_year))


def max_drawdown(curve: EquityCurve) -> float:
    """Largest peak-to-trough fractional decline; single forward scan."""
    peaks = np.maximum.accumulate(curve.values)
    return float(((peaks - curve.values) / peaks).max())


def compute_metrics(curve: EquityCurve, strategy: str, risk_free: float = 0.0,
                    seed: int | None = None) -> MetricsReport:
    try:
        sharpe = sharpe_ratio(curve, risk_free)
    except ZeroVariance:
        sharpe = None
    ts = curve.timestamps
    return MetricsReport(
        strategy=strategy,
        initial_value=float(curve.values[0]),
        final_value=float(curve.values[-1]),
        annualized_return=annualized_return(curve),
        annualized_std=annualized_std(curve),
        sharpe=sharpe,
        max_drawdown=max_drawdown(curve),
        date_range=(ts[0].date().isoformat(), ts[-1].date().isoformat()),
        seed=seed,
    )


def run_backtest(actor, frame, env_config) -> EquityCurve:
    """One deterministic eval episode of a Policy, or a baseline run.

    ``actor`` is either an agents.Policy or a baselines.StrategyConfig;
    baselines route through run_strategy so both paths share the same
    execution engine.
    """
    from .agents.common import Policy, act
    from .baselines import StrategyConfig, run_strategy

    if isinstance(actor, StrategyConfig):
        return run_strategy(frame, actor, env_config.initial_capital, env_config.costs)
    if not isinstance(actor, Policy):
        raise TypeError(f"cannot backtest {type(actor).__name__}")

    env = env_config.build(frame)
    if actor.obs_dim != env.observation_size:
        raise LayoutMismatch(
            f"policy expects {actor.obs_dim} observation entries, env emits "
            f"{env.observation_size}")
    kind = actor.action_meta["kind"]
    if kind != env.action_kind:
        raise LayoutMismatch(f"policy emits {kind} actions, env takes {env.action_kind}")
    if kind == "discrete" and list(actor.action_meta["actions"]) != list(env.actions):
        raise LayoutMismatch("policy action set differs from env action set")
    if kind == "box" and actor.action_meta["dim"] != env.action_dim:
        raise LayoutMismatch(
            f"policy action dim {actor.action_meta['dim']} != env {env.action_dim}")

    obs = env.reset()
    done = False
    while not done:
        outcome = env.step(act(actor, obs))
        obs = outcome.observation
        done = outcome.done
    return EquityCurve(env.curve_timestamps(), env.values(),
                       env.periods_per_year)


# --- rendering ----------------------------------------------------------------


def _fmt_currency(x: float) -> str:
    return f"{x:,.0f}"


def _fmt_percent(x: float) -> str:
    return f"{x * 100.0:.2f}%"


def _fmt_sharpe(x: float | None) -> str:
    return "n/a" if x is None else f"{x:.2f}"


def _formatted_column(report: MetricsReport) -> list:
    return [
        _fmt_currency(report.initial_value),
        _fmt_currency(report.final_value),
        _fmt_percent(report.annualized_return),
        _fmt_percent(report.annualized_std),
        _fmt_sharpe(report.sharpe),
        _fmt_percent(report.max_drawdown),
    ]


@dataclass(frozen=True)
class ComparisonTable:
    corner: str
    columns: tuple          # strategy names, in given order
    rows: tuple             # six row labels
    cells: tuple            # rows x columns of formatted strings

    def to_text(self) -> str:
        header = [self.corner, *self.columns]
        table = [header] + [
            [label, *row] for label, row in zip(self.rows, self.cells)
        ]
        widths = [max(len(r[c]) for r in table) for c in range(len(header))]
        lines = []
        for i, row in enumerate(table):
            cells = [row[0].ljust(widths[0])]
            cells += [v.rjust(w) for v, w in zip(row[1:], widths[1:])]
            lines.append("  ".join(cells).rstrip())
            if i == 0:
                lines.append("-" * len(lines[0]))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        def quote(cell: str) -> str:
            return f'"{cell}"' if "," in cell else cell

        lines = [",".join([quote(self.corner), *map(quote, self.columns)])]
        for label, row in zip(self.rows, self.cells):
            lines.append(",".join([quote(label), *map(quote, row)]))
        return "\n".join(lines) + "\n"


def compare(reports: list, corner: str = "") -> ComparisonTable:
    """Assemble the six-row metric table, one column per report."""
    if not reports:
        raise ValueError("need at least one report")
    return ComparisonTable(
        corner=corner,
        columns=tuple(r.strategy for r in reports),
        rows=tuple(label for label, _ in METRIC_ROWS),
        cells=tuple(zip(*[_formatted_column(r) for r in reports])),
    )


# --- serialization --------------------------------------------------------------


def report_to_dict(report: MetricsReport) -> dict:
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "strategy": report.strategy,
        "date_range": list(report.date_range) if report.date_range else None,
        "seed": report.seed,
        "initial_value": report.initial_value,
        "final_value": report.final_value,
        "annualized_return": report.annualized_return,
        "annualized_std": report.annualized_std,
        "sharpe": report.sharpe,
        "max_drawdown": report.max_drawdown,
    }


def write_report(report: MetricsReport, path) -> None:
    atomic_write_text(path, canonical_json(report_to_dict(report)))


def load_report(path) -> MetricsReport:
    with open(path, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    version = d.get("schema_version")
    if version != REPORT_SCHEMA_VERSION:
        raise ReportSchemaMismatch(str(path), version)
    return MetricsReport(
        strategy=d["strategy"],
        initial_value=d["initial_value"],
        final_value=d["final_value"],
        annualized_return=d["annualized_return"],
        annualized_std=d["annualized_std"],
        sharpe=d["sharpe"],
        max_drawdown=d["max_drawdown"],
        date_range=tuple(d["date_range"]) if d.get("date_range") else None,
        seed=d.get("seed"),
    )


def write_curve_csv(curve: EquityCurve, path) -> None:
    lines = ["timestamp,value"]
    for ts, v in zip(curve.timestamps, curve.values):
        lines.append(f"{ts.isoformat()},{float(v)!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_curve_csv(path, periods_per_year: float = 252.0) -> EquityCurve:
    stamps = []
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "timestamp,value":
            raise ValueError(f"unexpected curve header {header!r}")
        for line in fh:
            ts, v = line.strip().split(",")
            stamps.append(pd.Timestamp(ts))
            values.append(float(v))
    return EquityCurve(pd.DatetimeIndex(stamps), np.asarray(values), periods_per_year)
