"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes, so raising the right class
matters: ConfigError for bad configuration or misuse of an operation,
DataError for malformed input data, MarketError (and subclasses) for
trading-rule violations, JournalError for unrecoverable journal damage.
"""


class RepMarketError(Exception):
    """Base class for all package errors."""


class ConfigError(RepMarketError):
    """Invalid configuration value or invalid use of an operation."""


class DataError(RepMarketError):
    """Malformed or inconsistent input data."""


class MarketError(RepMarketError):
    """A trading rule was violated."""


class InsufficientCash(MarketError):
    """Buy order rejected: the account cannot cover the trade cost."""


class InsufficientHoldings(MarketError):
    """Sell order rejected: the account holds no share on that side."""


class SettlementError(MarketError):
    """Settlement attempted twice, or on a market that cannot settle."""


class JournalError(RepMarketError):
    """Journal replay hit an entry that contradicts the recorded state."""
