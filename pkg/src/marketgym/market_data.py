"""Bar data ingestion, alignment, technical indicators, and chronological splits.

The central type is :class:`MarketFrame`: an immutable, fully aligned
multi-asset panel of OHLCV bars plus optional indicator matrices.  All
downstream layers (environments, baselines, backtests) consume MarketFrames
and never touch raw CSVs.

Alignment policy: assets are aligned on the *intersection* of their
timestamps.  Forward-filling across the union is available as an explicit
opt-in (``forward_fill=True``); nothing is ever fabricated by default.

Indicator warm-up: EMAs are seeded with the simple mean of the first
``period`` values, and indicator rows before the first valid value are
backfilled with that value so every cell is finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import (
    CannotUpsample,
    DuplicateBar,
    EmptyIntersection,
    EmptySplit,
    MalformedRow,
    MissingColumn,
    SeriesTooShort,
    WindowTooLarge,
)

GRANULARITIES = ("minute", "hourly", "daily")  # fine -> coarse
CANONICAL_COLUMNS = ("ticker", "timestamp", "open", "high", "low", "close", "volume")
PRICE_FIELDS = ("open", "high", "low", "close", "volume")

_GRANULARITY_STEP = {
    "minute": pd.Timedelta(minutes=1),
    "hourly": pd.Timedelta(hours=1),
    "daily": pd.Timedelta(days=1),
}

# annualization constants per granularity (252 trading days, 6.5h sessions)
PERIODS_PER_YEAR = {
    "daily": 252.0,
    "hourly": 252.0 * 6.5,
    "minute": 252.0 * 390.0,
}


@dataclass(frozen=True)
class Bar:
    """A single OHLCV observation for one asset at one instant."""

    ticker: str
    timestamp: pd.Timestamp
    open: float
    high: float
    low: float
    close: float
    volume: float

    def __post_init__(self):
        if not (self.low <= self.open <= self.high):
            raise ValueError(f"open {self.open} outside [low, high]")
        if not (self.low <= self.close <= self.high):
            raise ValueError(f"close {self.close} outside [low, high]")
        if min(self.open, self.high, self.low, self.close) <= 0:
            raise ValueError("prices must be strictly positive")
        if self.volume < 0:
            raise ValueError("volume must be non-negative")


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MarketFrame:
    """Aligned multi-asset bar panel.

    ``panels[field]`` and ``indicators[name]`` are T x n float64 matrices
    (T timestamps, n tickers).  Arrays are read-only; operations return new
    frames, so a MarketFrame can be shared freely across threads.
    """

    tickers: tuple
    timestamps: pd.DatetimeIndex
    granularity: str
    panels: dict
    indicators: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"unknown granularity {self.granularity!r}")
        object.__setattr__(self, "tickers", tuple(self.tickers))
        object.__setattr__(self, "panels", {
            k: np.ascontiguousarray(v, dtype=np.float64) for k, v in self.panels.items()
        })
        object.__setattr__(self, "indicators", {
            k: np.ascontiguousarray(v, dtype=np.float64) for k, v in self.indicators.items()
        })
        n, t = self.n_assets, self.n_steps
        if t == 0 or n == 0:
            raise ValueError("frame must contain at least one timestamp and ticker")
        if not self.timestamps.is_monotonic_increasing or self.timestamps.has_duplicates:
            raise ValueError("timestamps must be strictly increasing")
        if t > 1:
            step = _GRANULARITY_STEP[self.granularity]
            if (self.timestamps[1:] - self.timestamps[:-1]).min() < step:
                raise ValueError(f"timestamp spacing finer than {self.granularity}")
        for name in PRICE_FIELDS:
            if name not in self.panels:
                raise ValueError(f"missing panel {name!r}")
        for name, mat in list(self.panels.items()) + list(self.indicators.items()):
            if mat.shape != (t, n):
                raise ValueError(f"panel {name!r} has shape {mat.shape}, want {(t, n)}")
            if not np.isfinite(mat).all():
                raise ValueError(f"panel {name!r} contains non-finite values")
            _readonly(mat)

    @property
    def n_assets(self) -> int:
        return len(self.tickers)

    @property
    def n_steps(self) -> int:
        return len(self.timestamps)

    def closes(self) -> np.ndarray:
        return self.panels["close"]

    def indicator(self, name: str) -> np.ndarray:
        return self.indicators[name]

    def with_indicator(self, name: str, matrix: np.ndarray) -> "MarketFrame":
        ind = dict(self.indicators)
        ind[name] = np.ascontiguousarray(matrix, dtype=np.float64)
        return MarketFrame(self.tickers, self.timestamps, self.granularity,
                           self.panels, ind)

    def slice_rows(self, start: int, stop: int) -> "MarketFrame":
        if stop <= start:
            raise ValueError("empty row slice")
        return MarketFrame(
            self.tickers,
            self.timestamps[start:stop],
            self.granularity,
            {k: v[start:stop].copy() for k, v in self.panels.items()},
            {k: v[start:stop].copy() for k, v in self.indicators.items()},
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, MarketFrame):
            return NotImplemented
        return (
            self.tickers == other.tickers
            and self.granularity == other.granularity
            and self.timestamps.equals(other.timestamps)
            and self.panels.keys() == other.panels.keys()
            and self.indicators.keys() == other.indicators.keys()
            and all(np.array_equal(self.panels[k], other.panels[k]) for k in self.panels)
            and all(np.array_equal(self.indicators[k], other.indicators[k])
                    for k in self.indicators)
        )


@dataclass(frozen=True)
class SplitSpec:
    """Three chronological half-open timestamp ranges [start, end)."""

    train: tuple
    validation: tuple
    test: tuple

    def __post_init__(self):
        ranges = {}
        for name in ("train", "validation", "test"):
            start, end = getattr(self, name)
            start, end = pd.Timestamp(start), pd.Timestamp(end)
            start = start.tz_localize("UTC") if start.tzinfo is None else start.tz_convert("UTC")
            end = end.tz_localize("UTC") if end.tzinfo is None else end.tz_convert("UTC")
            if start >= end:
                raise ValueError(f"{name} range is empty: [{start}, {end})")
            ranges[name] = (start, end)
            object.__setattr__(self, name, (start, end))
        if ranges["train"][1] > ranges["validation"][0] or ranges["validation"][1] > ranges["test"][0]:
            raise ValueError("split ranges must be non-overlapping and ordered train < validation < test")


# --- ingestion --------------------------------------------------------------


def ingest_csv(path, schema: dict | None = None, granularity: str = "daily",
               forward_fill: bool = False) -> MarketFrame:
    """Read a bar CSV into an aligned :class:`MarketFrame`.

    ``schema`` maps canonical column names (ticker, timestamp, open, high,
    low, close, volume) to the file's column names; omitted entries default
    to the canonical name itself.  One row per (ticker, timestamp) is
    required.  Assets are aligned on the intersection of their timestamps
    unless ``forward_fill`` is set, in which case gaps inside an asset's
    history are filled with its previous bar's close (zero volume) and only
    leading gaps are dropped.
    """
    schema = dict(schema or {})
    unknown = set(schema) - set(CANONICAL_COLUMNS)
    if unknown:
        raise MissingColumn(sorted(unknown)[0])
    colmap = {name: schema.get(name, name) for name in CANONICAL_COLUMNS}

    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    for canonical, col in colmap.items():
        if col not in df.columns:
            raise MissingColumn(col)
    df = df.rename(columns={v: k for k, v in colmap.items()})
    if len(df) == 0:
        raise EmptyIntersection()

    # line numbers refer to the source file: +2 for the header and 1-indexing
    lines = np.arange(len(df)) + 2

    ts = pd.to_datetime(df["timestamp"], errors="coerce", utc=True, format="mixed")
    bad = ts.isna().to_numpy()
    if bad.any():
        raise MalformedRow(int(lines[bad][0]), "unparseable timestamp")

    numeric = {}
    for name in PRICE_FIELDS:
        # numpy's parser is correctly rounded; pandas' fast path is not,
        # which would break the repr round trip through the canonical CSV
        raw = df[name].to_numpy()
        try:
            vals = raw.astype(np.float64)
        except ValueError:
            for i, cell in enumerate(raw):
                try:
                    float(cell)
                except ValueError:
                    raise MalformedRow(int(lines[i]), f"non-numeric {name}") from None
            raise
        bad = ~np.isfinite(vals)
        if bad.any():
            raise MalformedRow(int(lines[bad][0]), f"non-numeric {name}")
        numeric[name] = vals

    o, h, l, c, v = (numeric[k] for k in PRICE_FIELDS)
    bad = (
        (l > h) | (o < l) | (o > h) | (c < l) | (c > h)
        | (o <= 0) | (h <= 0) | (l <= 0) | (c <= 0) | (v < 0)
    )
    if bad.any():
        raise MalformedRow(int(lines[bad][0]), "OHLCV invariant violated")

    tickers_col = df["ticker"].to_numpy()
    dup = pd.MultiIndex.from_arrays([tickers_col, ts]).duplicated()
    if dup.any():
        i = int(np.nonzero(dup)[0][0])
        raise DuplicateBar(str(tickers_col[i]), ts.iloc[i])

    long = pd.DataFrame({"ticker": tickers_col, "timestamp": ts, **numeric})
    tickers = tuple(sorted(long["ticker"].unique()))

    panels = {}
    for name in PRICE_FIELDS:
        wide = long.pivot(index="timestamp", columns="ticker", values=name)
        wide = wide.reindex(columns=list(tickers)).sort_index()
        panels[name] = wide

    if forward_fill:
        close = panels["close"].ffill()
        for name in ("open", "high", "low"):
            panels[name] = panels[name].fillna(close)
        panels["close"] = close
        panels["volume"] = panels["volume"].fillna(0.0)

    # keep rows where every ticker has a bar (intersection; after the
    # optional forward fill only leading gaps remain)
    keep = np.ones(len(panels["close"]), dtype=bool)
    for mat in panels.values():
        keep &= mat.notna().all(axis=1).to_numpy()
    if not keep.any():
        raise EmptyIntersection()

    index = pd.DatetimeIndex(panels["close"].index[keep]).tz_convert("UTC")
    arrays = {k: np.ascontiguousarray(m.to_numpy(dtype=np.float64)[keep])
              for k, m in panels.items()}
    return MarketFrame(tickers, index, granularity, arrays)


def _format_timestamp(ts: pd.Timestamp, granularity: str) -> str:
    if granularity == "daily" and ts == ts.normalize():
        return ts.strftime("%Y-%m-%d")
    return ts.isoformat()


def write_canonical_csv(frame: MarketFrame, path) -> None:
    """Emit the frame in the canonical CSV dialect.

    Columns ticker, timestamp (ISO-8601, UTC), open, high, low, close,
    volume; rows sorted by (timestamp, ticker).  Floats use repr so a
    re-ingest reproduces the frame exactly.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(CANONICAL_COLUMNS) + "\n")
        for t in range(frame.n_steps):
            stamp = _format_timestamp(frame.timestamps[t], frame.granularity)
            for j, ticker in enumerate(frame.tickers):
                cells = [ticker, stamp] + [
                    repr(float(frame.panels[f][t, j])) for f in PRICE_FIELDS
                ]
                fh.write(",".join(cells) + "\n")


# --- indicators -------------------------------------------------------------


def _ema_matrix(values: np.ndarray, period: int) -> np.ndarray:
    """EMA per column, seeded with the mean of the first ``period`` values.

    Rows before the seed row are backfilled with the seed so the output is
    finite everywhere.
    """
    t, n = values.shape
    alpha = 2.0 / (period + 1.0)
    out = np.empty_like(values)
    seed = values[:period].mean(axis=0)
    out[: period] = seed
    prev = seed
    for i in range(period, t):
        prev = alpha * values[i] + (1.0 - alpha) * prev
        out[i] = prev
    return out


def compute_macd(frame: MarketFrame, fast: int = 12, slow: int = 26,
                 signal: int = 9) -> MarketFrame:
    """Add ``macd`` (fast EMA minus slow EMA of close) and ``macd_signal``.

    Warm-up rows (before the slow EMA is seeded) are backfilled with the
    first valid MACD value.
    """
    if frame.n_steps <= slow:
        raise SeriesTooShort(slow, frame.n_steps)
    close = frame.closes()
    line = _ema_matrix(close, fast) - _ema_matrix(close, slow)
    line[: slow] = line[slow - 1]
    sig = _ema_matrix(line, signal)
    return frame.with_indicator("macd", line).with_indicator("macd_signal", sig)


def compute_rsi(frame: MarketFrame, period: int = 14) -> MarketFrame:
    """Add ``rsi`` in [0, 100] using Wilder smoothing of average gains/losses.

    A window with zero average loss maps to 100, zero average gain to 0, and
    a completely flat window to the neutral 50.  Warm-up rows backfill the
    first valid value.
    """
    if frame.n_steps <= period:
        raise SeriesTooShort(period, frame.n_steps)
    close = frame.closes()
    t, n = close.shape
    diff = np.diff(close, axis=0)
    gain = np.clip(diff, 0.0, None)
    loss = np.clip(-diff, 0.0, None)

    avg_gain = np.empty((t - 1, n))
    avg_loss = np.empty((t - 1, n))
    avg_gain[period - 1] = gain[:period].mean(axis=0)
    avg_loss[period - 1] = loss[:period].mean(axis=0)
    for i in range(period, t - 1):
        avg_gain[i] = (avg_gain[i - 1] * (period - 1) + gain[i]) / period
        avg_loss[i] = (avg_loss[i - 1] * (period - 1) + loss[i]) / period

    g = avg_gain[period - 1:]
    lo = avg_loss[period - 1:]
    rsi_valid = np.empty_like(g)
    flat = (g == 0.0) & (lo == 0.0)
    no_loss = (lo == 0.0) & ~flat
    with np.errstate(divide="ignore", invalid="ignore"):
        rs = np.where(lo > 0.0, g / np.where(lo > 0.0, lo, 1.0), 0.0)
    rsi_valid[:] = 100.0 - 100.0 / (1.0 + rs)
    rsi_valid[no_loss] = 100.0
    rsi_valid[flat] = 50.0

    out = np.empty((t, n))
    out[period:] = rsi_valid
    out[: period] = rsi_valid[0]
    return frame.with_indicator("rsi", out)


# --- resampling -------------------------------------------------------------


def resample(frame: MarketFrame, target: str) -> MarketFrame:
    """Aggregate bars to a coarser granularity.

    Per bucket: open = first open, close = last close, high = max high,
    low = min low, volume = sum.  Buckets are labeled with their floor
    (midnight for daily, top of hour for hourly).  Indicators are dropped;
    recompute them on the resampled frame.
    """
    if target not in GRANULARITIES:
        raise ValueError(f"unknown granularity {target!r}")
    if GRANULARITIES.index(target) <= GRANULARITIES.index(frame.granularity):
        raise CannotUpsample(frame.granularity, target)

    rule = "D" if target == "daily" else "h"
    labels = frame.timestamps.floor(rule)
    # bucket boundaries as positions into the original rows
    change = np.nonzero(labels[1:] != labels[:-1])[0] + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [frame.n_steps]))

    p = frame.panels
    out = {
        "open": p["open"][starts],
        "close": p["close"][ends - 1],
        "high": np.stack([p["high"][s:e].max(axis=0) for s, e in zip(starts, ends)]),
        "low": np.stack([p["low"][s:e].min(axis=0) for s, e in zip(starts, ends)]),
        "volume": np.stack([p["volume"][s:e].sum(axis=0) for s, e in zip(starts, ends)]),
    }
    index = pd.DatetimeIndex(labels[starts])
    return MarketFrame(frame.tickers, index, target,
                       {k: np.ascontiguousarray(v) for k, v in out.items()})


# --- splitting --------------------------------------------------------------


def _range_mask(timestamps: pd.DatetimeIndex, rng: tuple) -> np.ndarray:
    start, end = rng
    return (timestamps >= start) & (timestamps < end)


def split(frame: MarketFrame, spec: SplitSpec):
    """Cut the frame into (train, validation, test) sub-frames."""
    out = []
    for name in ("train", "validation", "test"):
        mask = _range_mask(frame.timestamps, getattr(spec, name))
        idx = np.nonzero(mask)[0]
        if idx.size == 0:
            raise EmptySplit(name)
        out.append(frame.slice_rows(int(idx[0]), int(idx[-1]) + 1))
    return tuple(out)


def rolling_windows(frame: MarketFrame, train_len: int, val_len: int,
                    test_len: int, stride: int):
    """Enumerate walk-forward :class:`SplitSpec` windows over the frame.

    Windows start at indices 0, stride, 2*stride, ... and consist of three
    contiguous segments of the given lengths; a final partial window is
    dropped.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if min(train_len, val_len, test_len) < 1:
        raise ValueError("segment lengths must be >= 1")
    total = train_len + val_len + test_len
    if total > frame.n_steps:
        raise WindowTooLarge(total, frame.n_steps)

    ts = frame.timestamps
    step = _GRANULARITY_STEP[frame.granularity]

    def boundary(i: int) -> pd.Timestamp:
        return ts[i] if i < frame.n_steps else ts[-1] + step

    specs = []
    for s in range(0, frame.n_steps - total + 1, stride):
        a, b, c, d = s, s + train_len, s + train_len + val_len, s + total
        specs.append(SplitSpec(
            train=(ts[a], boundary(b)),
            validation=(ts[b], boundary(c)),
            test=(ts[c], boundary(d)),
        ))
    return specs
