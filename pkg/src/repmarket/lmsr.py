"""Logarithmic market scoring rule engine for binary outcome markets.

Each market trades two contracts, YES and NO, each paying $1 if the
claim's replication attempt lands on that side. The maker quotes from
the potential

    C(q) = b * log(exp(q_yes / b) + exp(q_no / b))

so a trade moving holdings from q to q' costs C(q') - C(q) regardless of
how it is split into steps, and the spot YES price is the softmax
derivative dC/dq_yes. The maker's worst-case subsidy is b * log(2).

The scalar math here is written in the exact form the compiled batch
kernels replicate: the same sequence of float64 operations produces
bit-identical prices and costs on every execution path, which is what
makes journal replays reproduce closing prices exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import MarketError, SettlementError

LN2 = math.log(2.0)

YES = "yes"
NO = "no"
SIDES = (YES, NO)

PRICE_DECIMALS = 3
MONEY_DECIMALS = 4

# Market lifecycle. Trades execute only while open.
PENDING = "pending"
OPEN = "open"
CLOSED = "closed"
SETTLED = "settled"


def price_yes(q_yes: float, q_no: float, b: float) -> float:
    """Spot YES price, softmax of outstanding shares. Strictly in (0, 1).

    Branching on the sign of the exponent keeps exp() arguments
    non-positive, so extreme imbalances saturate instead of overflowing.
    """
    d = (q_no - q_yes) / b
    if d >= 0.0:
        e = math.exp(-d)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(d))


def price_no(q_yes: float, q_no: float, b: float) -> float:
    return price_yes(q_no, q_yes, b)


def cost(q_yes: float, q_no: float, b: float) -> float:
    """Potential C(q), evaluated in shifted log-sum-exp form."""
    a = q_yes / b
    c = q_no / b
    m = a if a > c else c
    return b * (m + math.log(math.exp(a - m) + math.exp(c - m)))


def trade_cost(
    q_yes: float, q_no: float, b: float, d_yes: float, d_no: float
) -> float:
    """Cost of moving outstanding shares by (d_yes, d_no). Negative for
    trades that return money to the trader."""
    return cost(q_yes + d_yes, q_no + d_no, b) - cost(q_yes, q_no, b)


def maker_loss(q_yes: float, q_no: float, b: float, winner: str) -> float:
    """Maker's net payout at settlement: shares redeemed on the winning
    side minus money collected. Bounded above by b * log(2)."""
    q_win = q_yes if winner == YES else q_no
    collected = cost(q_yes, q_no, b) - cost(0.0, 0.0, b)
    return q_win - collected


def round_price(p: float) -> float:
    """Display price, 3 decimal places."""
    return round(p, PRICE_DECIMALS)


def quantize_money(x: float) -> float:
    """Round to 4-decimal fixed point, half away from zero. Account
    balances, order costs, and payouts all cross the wire in this grid."""
    scaled = x * 10000.0
    if scaled >= 0.0:
        return math.floor(scaled + 0.5) / 10000.0
    return -math.floor(-scaled + 0.5) / 10000.0


def predict(closing_price: float) -> str:
    """Map a closing YES price to a categorical call: replicate at or
    above 0.5, fail to replicate below."""
    return "R" if closing_price >= 0.5 else "NR"


@dataclass(frozen=True)
class Fill:
    """Result of one executed order."""

    side: str
    shares: float
    cost: float
    price_after: float

    @property
    def cost_money(self) -> float:
        return quantize_money(self.cost)


@dataclass
class Market:
    """Mutable state of one binary market.

    Holds only the maker's view: outstanding shares per side and the
    liquidity parameter. Per-account positions live with whoever routes
    orders in (the simulator's arrays or the trading service's books).
    """

    market_id: str
    claim_id: str
    b: float
    q_yes: float = 0.0
    q_no: float = 0.0
    status: str = PENDING
    winner: str | None = None
    trade_count: int = 0

    def __post_init__(self):
        if not (self.b > 0.0 and math.isfinite(self.b)):
            raise MarketError(f"liquidity parameter must be positive, got {self.b!r}")

    @property
    def price(self) -> float:
        """Exact spot YES price."""
        return price_yes(self.q_yes, self.q_no, self.b)

    @property
    def display_price(self) -> float:
        return round_price(self.price)

    def quote(self, side: str, shares: float = 1.0) -> float:
        """Exact cost of a prospective order without executing it.
        Positive shares buy, negative sell."""
        if side not in SIDES:
            raise MarketError(f"side must be yes or no, got {side!r}")
        if shares == 0.0 or not math.isfinite(shares):
            raise MarketError(f"share quantity must be finite and nonzero, got {shares!r}")
        if side == YES:
            return trade_cost(self.q_yes, self.q_no, self.b, shares, 0.0)
        return trade_cost(self.q_yes, self.q_no, self.b, 0.0, shares)

    def execute(self, side: str, shares: float = 1.0) -> Fill:
        """Execute an order against the maker. Only legal while open."""
        if self.status != OPEN:
            raise MarketError(
                f"market {self.market_id} is {self.status}, not open"
            )
        paid = self.quote(side, shares)
        if side == YES:
            self.q_yes += shares
        else:
            self.q_no += shares
        self.trade_count += 1
        return Fill(
            side=side,
            shares=shares,
            cost=paid,
            price_after=self.price,
        )

    def open(self) -> None:
        if self.status != PENDING:
            raise MarketError(
                f"market {self.market_id} cannot open from {self.status}"
            )
        self.status = OPEN

    def close(self) -> float:
        """Freeze trading. Returns the exact closing YES price."""
        if self.status != OPEN:
            raise MarketError(
                f"market {self.market_id} cannot close from {self.status}"
            )
        self.status = CLOSED
        return self.price

    def settle(self, winner: str) -> None:
        if self.status != CLOSED:
            raise SettlementError(
                f"market {self.market_id} cannot settle from {self.status}"
            )
        if winner not in SIDES:
            raise SettlementError(f"winner must be yes or no, got {winner!r}")
        self.status = SETTLED
        self.winner = winner

    def payout_per_share(self, side: str) -> float:
        """Redemption value of one share after settlement."""
        if self.status != SETTLED:
            raise SettlementError(
                f"market {self.market_id} is not settled"
            )
        return 1.0 if side == self.winner else 0.0

    def snapshot(self) -> dict:
        """JSON-friendly view with wire-format rounding applied."""
        return {
            "market_id": self.market_id,
            "claim_id": self.claim_id,
            "b": self.b,
            "q_yes": self.q_yes,
            "q_no": self.q_no,
            "status": self.status,
            "price": self.display_price,
            "trade_count": self.trade_count,
            "winner": self.winner,
        }
