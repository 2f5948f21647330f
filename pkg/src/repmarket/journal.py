"""Append-only JSONL journals with exact-replay verification.

Every state-changing market event is one JSON object per line. Records
buffer in memory until commit(), which writes, flushes, and fsyncs, so a
crash never leaves a half-written batch ahead of the durable prefix.

Replay re-executes every trade through the scalar price engine and
demands bit-for-bit agreement with the recorded costs and prices. JSON
serializes doubles via repr, which round-trips exactly, so any drift is
real divergence, not formatting noise. A line that fails to parse or
verify halts replay at the last valid state and is reported, never
papered over.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

from . import lmsr
from .errors import JournalError

logger = logging.getLogger(__name__)

MARKET_RECORD_TYPES = (
    "market_open",
    "trade",
    "rejection",
    "checkpoint",
    "tick_skip",
    "market_close",
    "settle",
)


def encode(record: dict) -> str:
    """Canonical single-line JSON for one record."""
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


class Journal:
    """Durable JSONL sink. append() buffers; commit() writes one batch,
    flushes, and fsyncs. Use as a context manager or call close()."""

    def __init__(self, path, fresh: bool = False):
        self.path = str(path)
        try:
            self._fh = open(self.path, "w" if fresh else "a", encoding="utf-8")
        except OSError as exc:
            raise JournalError(f"cannot open journal {self.path}: {exc}") from exc
        self._pending: list[str] = []
        self.records_written = 0

    def append(self, record: dict) -> None:
        self._pending.append(encode(record))

    def commit(self) -> None:
        if not self._pending:
            return
        self._fh.write("\n".join(self._pending) + "\n")
        self.records_written += len(self._pending)
        self._pending.clear()
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self) -> None:
        if self._fh.closed:
            return
        self.commit()
        self._fh.close()

    def __enter__(self) -> "Journal":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def scan(path) -> tuple[list[tuple[int, dict]], tuple[int, str] | None]:
    """Parse a journal into (line_number, record) pairs, stopping at the
    first malformed line. Returns (records, corruption) where corruption
    is (line_number, reason) or None for a clean file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise JournalError(f"cannot read journal {path}: {exc}") from exc
    records: list[tuple[int, dict]] = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if line == "":
            continue  # trailing newline or blank padding
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            return records, (lineno, f"invalid JSON: {exc.msg}")
        if not isinstance(record, dict) or not isinstance(record.get("type"), str):
            return records, (lineno, "record is not an object with a type")
        records.append((lineno, record))
    return records, None


def truncate_to(path, n_lines: int) -> None:
    """Cut a journal back to its first n_lines lines, dropping a corrupt
    tail so appends can resume from the last durable prefix."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise JournalError(f"cannot read journal {path}: {exc}") from exc
    kept = data.split(b"\n")[:n_lines]
    body = b"\n".join(kept)
    if body:
        body += b"\n"
    with open(path, "wb") as fh:
        fh.write(body)
        fh.flush()
        os.fsync(fh.fileno())


@dataclass
class HumanState:
    cash: float
    yes: int = 0
    no: int = 0
    trades: int = 0

    def holdings(self, side: str) -> int:
        return self.yes if side == lmsr.YES else self.no


@dataclass
class AgentState:
    """Agent book rebuilt from the journal. Cash is updated trade by
    trade in record order, matching the simulation's float sequence."""

    cash: float
    yes: int = 0
    no: int = 0
    trades: int = 0

    def holdings(self, side: str) -> int:
        return self.yes if side == lmsr.YES else self.no


@dataclass
class MarketState:
    """One market's state as reconstructed from its journal records."""

    market_id: str
    claim_id: str = ""
    mode: str = ""
    b: float = 0.0
    q_yes: float = 0.0
    q_no: float = 0.0
    status: str = lmsr.PENDING
    trade_count: int = 0
    agent_trades: int = 0
    rejections: int = 0
    last_tick: int = -1
    skipped: list[int] = field(default_factory=list)
    closing_price: float | None = None
    winner: str | None = None
    humans: dict[str, HumanState] = field(default_factory=dict)
    agents: dict[str, AgentState] = field(default_factory=dict)
    human_cash0: float = 0.0
    agent_cash0: float = 0.0

    @property
    def price(self) -> float:
        return lmsr.price_yes(self.q_yes, self.q_no, self.b)


class MarketReplayer:
    """Applies market records in order, re-deriving every price and cost
    and raising JournalError on any disagreement with what was recorded."""

    def __init__(self):
        self.markets: dict[str, MarketState] = {}

    def _market(self, record: dict) -> MarketState:
        market_id = record.get("market_id")
        if not isinstance(market_id, str) or not market_id:
            raise JournalError("record is missing market_id")
        state = self.markets.get(market_id)
        if state is None:
            raise JournalError(f"market {market_id} has no market_open record")
        return state

    def apply(self, record: dict) -> None:
        kind = record["type"]
        if kind not in MARKET_RECORD_TYPES:
            raise JournalError(f"unknown record type {kind!r}")
        getattr(self, f"_apply_{kind}")(record)

    def _apply_market_open(self, record: dict) -> None:
        market_id = record["market_id"]
        if market_id in self.markets:
            raise JournalError(f"market {market_id} opened twice")
        self.markets[market_id] = MarketState(
            market_id=market_id,
            claim_id=record.get("claim_id", ""),
            mode=record.get("mode", ""),
            b=float(record["b"]),
            status=lmsr.OPEN,
            human_cash0=float(record.get("human_cash", 0.0)),
            agent_cash0=float(record.get("agent_cash", 0.0)),
        )

    def _apply_trade(self, record: dict) -> None:
        state = self._market(record)
        if state.status != lmsr.OPEN:
            raise JournalError(f"trade on non-open market {state.market_id}")
        side = record["side"]
        if side not in lmsr.SIDES:
            raise JournalError(f"trade has invalid side {side!r}")
        shares = int(record["shares"])
        d_yes = float(shares) if side == lmsr.YES else 0.0
        d_no = float(shares) if side == lmsr.NO else 0.0
        cost = lmsr.trade_cost(state.q_yes, state.q_no, state.b, d_yes, d_no)
        if cost != record["cost"]:
            raise JournalError(
                f"trade cost mismatch on {state.market_id}: "
                f"recorded {record['cost']!r}, recomputed {cost!r}"
            )
        state.q_yes += d_yes
        state.q_no += d_no
        price = lmsr.price_yes(state.q_yes, state.q_no, state.b)
        if price != record["price_after"]:
            raise JournalError(
                f"trade price mismatch on {state.market_id}: "
                f"recorded {record['price_after']!r}, recomputed {price!r}"
            )
        state.trade_count += 1
        state.last_tick = max(state.last_tick, int(record["tick"]))
        if record.get("kind") == "human":
            trader = record["trader"]
            human = state.humans.get(trader)
            if human is None:
                human = HumanState(cash=state.human_cash0)
                state.humans[trader] = human
            human.cash -= cost
            if side == lmsr.YES:
                human.yes += shares
            else:
                human.no += shares
            human.trades += 1
        else:
            state.agent_trades += 1
            trader = record["trader"]
            agent = state.agents.get(trader)
            if agent is None:
                agent = AgentState(cash=state.agent_cash0)
                state.agents[trader] = agent
            agent.cash -= cost
            if side == lmsr.YES:
                agent.yes += shares
            else:
                agent.no += shares
            agent.trades += 1

    def _apply_rejection(self, record: dict) -> None:
        state = self._market(record)
        state.rejections += 1

    def _apply_checkpoint(self, record: dict) -> None:
        state = self._market(record)
        if state.q_yes != record["q_yes"] or state.q_no != record["q_no"]:
            raise JournalError(
                f"checkpoint mismatch on {state.market_id}: recorded "
                f"({record['q_yes']!r}, {record['q_no']!r}), replayed "
                f"({state.q_yes!r}, {state.q_no!r})"
            )
        state.last_tick = max(state.last_tick, int(record["tick"]))

    def _apply_tick_skip(self, record: dict) -> None:
        state = self._market(record)
        state.skipped.append(int(record["tick"]))

    def _apply_market_close(self, record: dict) -> None:
        state = self._market(record)
        if state.status != lmsr.OPEN:
            raise JournalError(f"close on non-open market {state.market_id}")
        price = lmsr.price_yes(state.q_yes, state.q_no, state.b)
        if price != record["closing_price"]:
            raise JournalError(
                f"closing price mismatch on {state.market_id}: recorded "
                f"{record['closing_price']!r}, recomputed {price!r}"
            )
        if state.q_yes != record["q_yes"] or state.q_no != record["q_no"]:
            raise JournalError(
                f"closing quantity mismatch on {state.market_id}"
            )
        state.status = lmsr.CLOSED
        state.closing_price = price

    def _apply_settle(self, record: dict) -> None:
        state = self._market(record)
        if state.status != lmsr.CLOSED:
            raise JournalError(f"settle on non-closed market {state.market_id}")
        winner = record["winner"]
        if winner not in lmsr.SIDES:
            raise JournalError(f"settle has invalid winner {winner!r}")
        state.status = lmsr.SETTLED
        state.winner = winner
        for human in state.humans.values():
            human.cash += float(human.holdings(winner))
        for agent in state.agents.values():
            agent.cash += float(agent.holdings(winner))


@dataclass
class ReplayResult:
    """Outcome of replaying one journal file."""

    markets: dict[str, MarketState]
    records_applied: int
    corrupt_line: int | None = None
    corrupt_reason: str = ""

    @property
    def ok(self) -> bool:
        return self.corrupt_line is None


def replay(path) -> ReplayResult:
    """Rebuild all market states in a journal, verifying every record.
    The first unparseable or unverifiable line halts replay at the last
    valid state; the result reports the line and the reason."""
    records, corruption = scan(path)
    replayer = MarketReplayer()
    applied = 0
    for lineno, record in records:
        try:
            replayer.apply(record)
        except (JournalError, KeyError, TypeError, ValueError) as exc:
            reason = exc.args[0] if exc.args else repr(exc)
            logger.warning("journal %s halted at line %d: %s", path, lineno, reason)
            return ReplayResult(
                markets=replayer.markets,
                records_applied=applied,
                corrupt_line=lineno,
                corrupt_reason=str(reason),
            )
        applied += 1
    if corruption is not None:
        lineno, reason = corruption
        logger.warning("journal %s halted at line %d: %s", path, lineno, reason)
        return ReplayResult(
            markets=replayer.markets,
            records_applied=applied,
            corrupt_line=lineno,
            corrupt_reason=reason,
        )
    return ReplayResult(markets=replayer.markets, records_applied=applied)
