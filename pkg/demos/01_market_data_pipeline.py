"""
From raw bar CSV to an aligned, indicator-bearing frame
=======================================================

Every other layer of marketgym consumes a MarketFrame: tickers on one
axis, timestamps on the other, OHLCV panels plus indicator matrices.
This script builds one from a CSV file and walks the preprocessing
steps a real workflow would use: ingest, indicators, resampling, and
a chronological train/validation/test split.
"""

import os
import tempfile

from marketgym import (
    SplitSpec,
    compute_macd,
    compute_rsi,
    ingest_csv,
    resample,
    split,
    write_canonical_csv,
)
from marketgym.synth import generate_synthetic_frame

# The library bundles a deterministic synthetic generator (regime-switching
# GBM over the Dow 30 ticker list) so the demos need no network access.
frame = generate_synthetic_frame(n_assets=5, n_days=260, seed=7)
print("generated:", frame.n_assets, "assets x", frame.n_steps, "days")
print("tickers:  ", ", ".join(frame.tickers))

# Round-trip through the canonical CSV layout: one row per (ticker, day),
# sorted, full float precision.  ingest_csv aligns assets on the
# intersection of their timestamps and validates the OHLC invariants.
workdir = tempfile.mkdtemp()
csv_path = os.path.join(workdir, "bars.csv")
write_canonical_csv(frame, csv_path)
frame = ingest_csv(csv_path)
print("ingested: ", frame.n_assets, "assets x", frame.n_steps, "days")

# Trading environments require two indicator matrices on the frame.
# compute_macd uses 12/26 EMAs with a 9-period signal line; compute_rsi
# is the 14-period Wilder oscillator.  Both return a new frame.
frame = compute_rsi(compute_macd(frame))
print("indicators:", sorted(frame.indicators))
print("macd[0] of", frame.tickers[0], "=", frame.indicator("macd")[0, 0])
print("rsi[-1] of", frame.tickers[0], "= %.2f" % frame.indicator("rsi")[-1, 0])

# Finer bars can be squashed to coarser ones (minute -> hourly -> daily).
# Per bucket: open is the first open, close the last close, high/low the
# extremes, volume the sum.  Indicators are dropped and recomputed on the
# coarse bars, never interpolated.  To show it, relabel the synthetic rows
# as one bar per hour and aggregate back to days.
import pandas as pd
from marketgym import MarketFrame

hourly_index = pd.date_range("2024-01-02", periods=frame.n_steps, freq="h", tz="UTC")
hourly = MarketFrame(frame.tickers, hourly_index, "hourly", frame.panels)
daily = resample(hourly, "daily")
print("resampled:", hourly.n_steps, "hourly bars ->", daily.n_steps, "daily ones")

# Chronological splits are half-open timestamp ranges, so adjacent windows
# never share a bar and nothing from the future leaks into training.
ts = frame.timestamps
spec = SplitSpec(
    train=(ts[0], ts[156]),
    validation=(ts[156], ts[208]),
    test=(ts[208], ts[-1] + (ts[-1] - ts[-2])),
)
train, val, test = split(frame, spec)
for name, part in [("train", train), ("validation", val), ("test", test)]:
    first = part.timestamps[0].date()
    last = part.timestamps[-1].date()
    print("%-11s %3d days  %s .. %s" % (name, part.n_steps, first, last))
