"""Exception types shared across the library.

Every error raised by marketgym derives from :class:`MarketGymError` so callers
can catch library failures with a single except clause.  Errors carry the
offending identifiers (column name, line number, ticker, ...) both in the
message and as attributes.
"""

from __future__ import annotations


class MarketGymError(Exception):
    """Base class for all marketgym errors."""


# --- market_data ----------------------------------------------------------

class MissingColumn(MarketGymError):
    def __init__(self, column: str):
        self.column = column
        super().__init__(f"required column not found in CSV: {column!r}")


class MalformedRow(MarketGymError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"malformed row at line {line}: {reason}")


class DuplicateBar(MarketGymError):
    def __init__(self, ticker: str, timestamp):
        self.ticker = ticker
        self.timestamp = timestamp
        super().__init__(f"duplicate bar for ({ticker!r}, {timestamp})")


class EmptyIntersection(MarketGymError):
    def __init__(self):
        super().__init__("no timestamp is shared by all tickers")


class SeriesTooShort(MarketGymError):
    def __init__(self, needed: int, got: int):
        self.needed = needed
        self.got = got
        super().__init__(f"series too short: need more than {needed} rows, got {got}")


class CannotUpsample(MarketGymError):
    def __init__(self, source: str, target: str):
        self.source = source
        self.target = target
        super().__init__(f"cannot resample {source} data to finer granularity {target}")


class EmptySplit(MarketGymError):
    def __init__(self, which: str):
        self.which = which
        super().__init__(f"{which} range contains no frame timestamps")


class WindowTooLarge(MarketGymError):
    def __init__(self, total: int, available: int):
        self.total = total
        self.available = available
        super().__init__(
            f"rolling window needs {total} steps but frame has only {available}"
        )


# --- trading_env ----------------------------------------------------------

class TaskShapeMismatch(MarketGymError):
    pass


class MissingIndicator(MarketGymError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"frame is missing required indicator {name!r}")


class EpisodeDone(MarketGymError):
    def __init__(self):
        super().__init__("step() called on a finished episode; call reset() first")


class ActionShapeMismatch(MarketGymError):
    pass


class NonFiniteAction(MarketGymError):
    def __init__(self):
        super().__init__("action contains NaN or infinite entries")


class NonPositiveValue(MarketGymError):
    def __init__(self, value: float):
        self.value = value
        super().__init__(f"portfolio value must be positive, got {value}")


class WindowTooShort(MarketGymError):
    def __init__(self, got: int):
        self.got = got
        super().__init__(f"trailing window holds {got} return(s); need at least 2")


class SingularCovariance(MarketGymError):
    def __init__(self):
        super().__init__("covariance matrix is singular and no ridge was applied")


# --- agents ---------------------------------------------------------------

class ShapeMismatch(MarketGymError):
    pass


class IncompatibleActionSpace(MarketGymError):
    pass


class TrainingDiverged(MarketGymError):
    def __init__(self, step: int, detail: str = "non-finite loss"):
        self.step = step
        self.detail = detail
        super().__init__(f"training diverged at step {step}: {detail}")


# --- baselines / backtest -------------------------------------------------

class InsufficientHistory(MarketGymError):
    """A strategy was asked to act before its warm-up history exists."""


class LayoutMismatch(MarketGymError):
    pass


class ZeroVariance(MarketGymError):
    def __init__(self):
        super().__init__("returns have zero variance; Sharpe ratio is undefined")


# --- cli ------------------------------------------------------------------

class ConfigError(MarketGymError):
    def __init__(self, key: str, reason: str):
        self.key = key
        self.reason = reason
        super().__init__(f"config error at {key!r}: {reason}")


class ReportSchemaMismatch(MarketGymError):
    def __init__(self, path: str, found):
        self.path = path
        self.found = found
        super().__init__(f"report {path} has unsupported schema_version {found!r}")
