import numpy as np
import pandas as pd
import pytest

from marketgym.errors import (
    CannotUpsample,
    DuplicateBar,
    EmptyIntersection,
    EmptySplit,
    MalformedRow,
    MissingColumn,
    WindowTooLarge,
)
from marketgym.market_data import (
    Bar,
    MarketFrame,
    SplitSpec,
    ingest_csv,
    resample,
    rolling_windows,
    split,
    write_canonical_csv,
)

from conftest import frame_from_closes, random_walk_closes


def write_csv(path, header, rows):
    path.write_text("\n".join([header] + rows) + "\n")
    return path


CANONICAL_HEADER = "ticker,timestamp,open,high,low,close,volume"


def test_ingest_happy_path_with_schema(tmp_path):
    rows = [
        "AAA,2020-01-02,10,11,9,10.5,100",
        "BBB,2020-01-02,20,22,19,21,200",
        "AAA,2020-01-03,10.5,12,10,11,150",
        "BBB,2020-01-03,21,23,20,22,250",
    ]
    path = write_csv(tmp_path / "bars.csv", "sym,date,o,h,l,c,vol",
                     [r for r in rows])
    schema = {"ticker": "sym", "timestamp": "date", "open": "o", "high": "h",
              "low": "l", "close": "c", "volume": "vol"}
    frame = ingest_csv(path, schema=schema, granularity="daily")
    assert frame.tickers == ("AAA", "BBB")
    assert frame.n_steps == 2
    assert frame.granularity == "daily"
    np.testing.assert_array_equal(frame.closes(), [[10.5, 21.0], [11.0, 22.0]])
    np.testing.assert_array_equal(frame.panels["volume"], [[100, 200], [150, 250]])
    assert str(frame.timestamps.tz) == "UTC"


def test_ingest_aligns_on_intersection(tmp_path):
    rows = [
        "AAA,2020-01-01,1,1,1,1,1",
        "AAA,2020-01-02,2,2,2,2,1",
        "AAA,2020-01-03,3,3,3,3,1",
        "BBB,2020-01-01,5,5,5,5,1",
        "BBB,2020-01-03,7,7,7,7,1",
    ]
    path = write_csv(tmp_path / "bars.csv", CANONICAL_HEADER, rows)
    frame = ingest_csv(path)
    # BBB has no 2020-01-02 bar, so that row drops for both assets
    assert frame.n_steps == 2
    np.testing.assert_array_equal(frame.closes(), [[1.0, 5.0], [3.0, 7.0]])


def test_ingest_forward_fill_keeps_gap_rows(tmp_path):
    rows = [
        "AAA,2020-01-01,1,1,1,1,10",
        "AAA,2020-01-02,2,2,2,2,10",
        "AAA,2020-01-03,3,3,3,3,10",
        "BBB,2020-01-01,5,5,5,5,10",
        "BBB,2020-01-03,7,7,7,7,10",
    ]
    path = write_csv(tmp_path / "bars.csv", CANONICAL_HEADER, rows)
    frame = ingest_csv(path, forward_fill=True)
    assert frame.n_steps == 3
    # the missing BBB bar is carried forward at its previous close, zero volume
    np.testing.assert_array_equal(frame.closes()[:, 1], [5.0, 5.0, 7.0])
    np.testing.assert_array_equal(frame.panels["open"][:, 1], [5.0, 5.0, 7.0])
    np.testing.assert_array_equal(frame.panels["volume"][:, 1], [10.0, 0.0, 10.0])


def test_ingest_forward_fill_drops_leading_gap(tmp_path):
    rows = [
        "AAA,2020-01-01,1,1,1,1,10",
        "AAA,2020-01-02,2,2,2,2,10",
        "BBB,2020-01-02,5,5,5,5,10",
    ]
    path = write_csv(tmp_path / "bars.csv", CANONICAL_HEADER, rows)
    frame = ingest_csv(path, forward_fill=True)
    # nothing to fill from before BBB's first bar
    assert frame.n_steps == 1
    assert frame.timestamps[0] == pd.Timestamp("2020-01-02", tz="UTC")


def test_ingest_unknown_schema_key(tmp_path):
    path = write_csv(tmp_path / "bars.csv", CANONICAL_HEADER,
                     ["AAA,2020-01-01,1,1,1,1,1"])
    with pytest.raises(MissingColumn):
        ingest_csv(path, schema={"closing_price": "close"})


def test_ingest_missing_column(tmp_path):
    path = write_csv(tmp_path / "bars.csv", "ticker,timestamp,open,high,low,close",
                     ["AAA,2020-01-01,1,1,1,1"])
    with pytest.raises(MissingColumn) as exc:
        ingest_csv(path)
    assert "volume" in str(exc.value)


def test_ingest_malformed_timestamp_reports_line(tmp_path):
    rows = [
        "AAA,2020-01-01,1,1,1,1,1",
        "AAA,not-a-date,1,1,1,1,1",
    ]
    path = write_csv(tmp_path / "bars.csv", CANONICAL_HEADER, rows)
    with pytest.raises(MalformedRow) as exc:
        ingest_csv(path)
    assert "line 3" in str(exc.value)


def test_ingest_non_numeric_price_reports_line(tmp_path):
    rows = [
        "AAA,2020-01-01,1,1,1,oops,1",
        "AAA,2020-01-02,1,1,1,1,1",
    ]
    path = write_csv(tmp_path / "bars.csv", CANONICAL_HEADER, rows)
    with pytest.raises(MalformedRow) as exc:
        ingest_csv(path)
    assert "line 2" in str(exc.value)
    assert "close" in str(exc.value)


def test_ingest_ohlc_violation_reports_line(tmp_path):
    rows = [
        "AAA,2020-01-01,1,1,1,1,1",
        "AAA,2020-01-02,1,0.5,2,1,1",  # high < low
    ]
    path = write_csv(tmp_path / "bars.csv", CANONICAL_HEADER, rows)
    with pytest.raises(MalformedRow) as exc:
        ingest_csv(path)
    assert "line 3" in str(exc.value)


def test_ingest_duplicate_bar(tmp_path):
    rows = [
        "AAA,2020-01-01,1,1,1,1,1",
        "AAA,2020-01-01,2,2,2,2,1",
    ]
    path = write_csv(tmp_path / "bars.csv", CANONICAL_HEADER, rows)
    with pytest.raises(DuplicateBar) as exc:
        ingest_csv(path)
    assert "AAA" in str(exc.value)


def test_ingest_disjoint_histories(tmp_path):
    rows = [
        "AAA,2020-01-01,1,1,1,1,1",
        "BBB,2020-01-02,1,1,1,1,1",
    ]
    path = write_csv(tmp_path / "bars.csv", CANONICAL_HEADER, rows)
    with pytest.raises(EmptyIntersection):
        ingest_csv(path)


def test_ingest_empty_file(tmp_path):
    path = write_csv(tmp_path / "bars.csv", CANONICAL_HEADER, [])
    with pytest.raises(EmptyIntersection):
        ingest_csv(path)


def test_canonical_csv_round_trip(tmp_path, rng):
    closes = random_walk_closes(rng, 3, 40)
    frame = frame_from_closes(closes, indicators="none")
    path = tmp_path / "canon.csv"
    write_canonical_csv(frame, path)
    again = ingest_csv(path)
    assert again == frame
    # daily bars at midnight serialize as bare dates
    first_data_line = path.read_text().splitlines()[1]
    assert first_data_line.split(",")[1] == "2020-01-01"


def test_resample_minute_to_hourly_oracle():
    stamps = pd.DatetimeIndex([
        "2020-01-01 09:30", "2020-01-01 09:45",
        "2020-01-01 10:15", "2020-01-01 10:30", "2020-01-01 10:55",
    ], tz="UTC")
    o = np.array([[10.0], [11.0], [12.0], [13.0], [14.0]])
    h = o + 1.0
    l = o - 0.5
    c = o + 0.25
    v = np.full((5, 1), 7.0)
    frame = MarketFrame(("AAA",), stamps, "minute",
                        {"open": o, "high": h, "low": l, "close": c, "volume": v})
    frame = frame.with_indicator("macd", np.zeros((5, 1)))
    out = resample(frame, "hourly")
    assert out.granularity == "hourly"
    assert list(out.timestamps) == [
        pd.Timestamp("2020-01-01 09:00", tz="UTC"),
        pd.Timestamp("2020-01-01 10:00", tz="UTC"),
    ]
    np.testing.assert_array_equal(out.panels["open"][:, 0], [10.0, 12.0])
    np.testing.assert_array_equal(out.panels["close"][:, 0], [11.25, 14.25])
    np.testing.assert_array_equal(out.panels["high"][:, 0], [12.0, 15.0])
    np.testing.assert_array_equal(out.panels["low"][:, 0], [9.5, 11.5])
    np.testing.assert_array_equal(out.panels["volume"][:, 0], [14.0, 21.0])
    assert out.indicators == {}


def test_resample_rejects_upsampling():
    frame = frame_from_closes(np.linspace(10, 20, 5), indicators="none")
    with pytest.raises(CannotUpsample):
        resample(frame, "minute")
    with pytest.raises(CannotUpsample):
        resample(frame, "daily")


def test_split_basic():
    frame = frame_from_closes(np.arange(1.0, 11.0), indicators="none")
    spec = SplitSpec(
        train=("2020-01-01", "2020-01-05"),
        validation=("2020-01-05", "2020-01-08"),
        test=("2020-01-08", "2020-01-11"),
    )
    train, val, test = split(frame, spec)
    assert train.n_steps == 4 and val.n_steps == 3 and test.n_steps == 3
    np.testing.assert_array_equal(train.closes()[:, 0], [1, 2, 3, 4])
    np.testing.assert_array_equal(test.closes()[:, 0], [8, 9, 10])


def test_split_empty_segment():
    frame = frame_from_closes(np.arange(1.0, 11.0), indicators="none")
    spec = SplitSpec(
        train=("2020-01-01", "2020-01-05"),
        validation=("2020-02-01", "2020-02-02"),
        test=("2020-03-01", "2020-03-02"),
    )
    with pytest.raises(EmptySplit) as exc:
        split(frame, spec)
    assert "validation" in str(exc.value)


def test_split_spec_rejects_overlap():
    with pytest.raises(ValueError):
        SplitSpec(
            train=("2020-01-01", "2020-01-10"),
            validation=("2020-01-05", "2020-01-15"),
            test=("2020-01-15", "2020-01-20"),
        )


def test_split_spec_rejects_empty_range():
    with pytest.raises(ValueError):
        SplitSpec(
            train=("2020-01-02", "2020-01-01"),
            validation=("2020-01-02", "2020-01-03"),
            test=("2020-01-03", "2020-01-04"),
        )


def test_rolling_windows_cover_and_align():
    frame = frame_from_closes(np.arange(1.0, 13.0), indicators="none")
    specs = rolling_windows(frame, train_len=4, val_len=2, test_len=2, stride=2)
    # starts 0, 2, 4 fit 8-step windows into 12 rows
    assert len(specs) == 3
    for i, spec in enumerate(specs):
        train, val, test = split(frame, spec)
        assert train.n_steps == 4 and val.n_steps == 2 and test.n_steps == 2
        assert train.closes()[0, 0] == 1.0 + 2 * i
    # the final window's test end extends one step past the last bar
    assert specs[-1].test[1] == frame.timestamps[-1] + pd.Timedelta(days=1)


def test_rolling_windows_too_large():
    frame = frame_from_closes(np.arange(1.0, 7.0), indicators="none")
    with pytest.raises(WindowTooLarge):
        rolling_windows(frame, train_len=4, val_len=2, test_len=2, stride=1)


def test_rolling_windows_bad_params():
    frame = frame_from_closes(np.arange(1.0, 13.0), indicators="none")
    with pytest.raises(ValueError):
        rolling_windows(frame, 4, 2, 2, stride=0)
    with pytest.raises(ValueError):
        rolling_windows(frame, 4, 0, 2, stride=1)


def test_frame_validation():
    stamps = pd.date_range("2020-01-01", periods=3, freq="D", tz="UTC")
    good = {f: np.ones((3, 2)) for f in ("open", "high", "low", "close", "volume")}

    bad_shape = dict(good)
    bad_shape["close"] = np.ones((3, 3))
    with pytest.raises(ValueError):
        MarketFrame(("A", "B"), stamps, "daily", bad_shape)

    bad_nan = {k: v.copy() for k, v in good.items()}
    bad_nan["close"][1, 0] = np.nan
    with pytest.raises(ValueError):
        MarketFrame(("A", "B"), stamps, "daily", bad_nan)

    missing = {k: v for k, v in good.items() if k != "volume"}
    with pytest.raises(ValueError):
        MarketFrame(("A", "B"), stamps, "daily", missing)

    hourly_stamps = pd.date_range("2020-01-01", periods=3, freq="h", tz="UTC")
    with pytest.raises(ValueError):
        MarketFrame(("A", "B"), hourly_stamps, "daily", good)

    with pytest.raises(ValueError):
        MarketFrame(("A", "B"), stamps[::-1], "daily", good)


def test_frame_arrays_read_only():
    frame = frame_from_closes([10.0, 11.0, 12.0], indicators="none")
    with pytest.raises(ValueError):
        frame.closes()[0, 0] = 99.0


def test_slice_rows_carries_indicators():
    frame = frame_from_closes(np.arange(1.0, 9.0), indicators="flat")
    sub = frame.slice_rows(2, 6)
    assert sub.n_steps == 4
    assert set(sub.indicators) == {"macd", "rsi"}
    np.testing.assert_array_equal(sub.closes()[:, 0], [3, 4, 5, 6])
    np.testing.assert_array_equal(sub.indicator("rsi"), np.full((4, 1), 50.0))
    with pytest.raises(ValueError):
        frame.slice_rows(3, 3)


def test_bar_validation():
    ts = pd.Timestamp("2020-01-01", tz="UTC")
    Bar("AAA", ts, 10.0, 11.0, 9.0, 10.5, 100.0)
    with pytest.raises(ValueError):
        Bar("AAA", ts, 12.0, 11.0, 9.0, 10.5, 100.0)  # open above high
    with pytest.raises(ValueError):
        Bar("AAA", ts, 10.0, 11.0, 9.0, 8.0, 100.0)  # close below low
    with pytest.raises(ValueError):
        Bar("AAA", ts, 10.0, 11.0, -1.0, 10.5, 100.0)  # negative price
    with pytest.raises(ValueError):
        Bar("AAA", ts, 10.0, 11.0, 9.0, 10.5, -5.0)  # negative volume
