"""Prediction markets over scientific replication claims: an automated
market maker, geometric trading agents trained by an evolutionary loop,
tick-level simulation with journaled replay, and a live trading service.
"""

from .errors import (
    ConfigError,
    DataError,
    InsufficientCash,
    InsufficientHoldings,
    JournalError,
    MarketError,
    RepMarketError,
    SettlementError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "InsufficientCash",
    "InsufficientHoldings",
    "JournalError",
    "MarketError",
    "RepMarketError",
    "SettlementError",
    "__version__",
]
