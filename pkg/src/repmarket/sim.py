"""Discrete-tick market runner, settlement, and evaluation metrics.

One MarketSession owns one market for its whole life: open, tick loop,
close, settle. Every tick has two phases. First all agents evaluate
their buy rule against the tick-start price in uid order and the
resulting buys execute sequentially, each moving the price before the
next. Then any queued human orders drain first-in first-out. Individual
rejections (not enough cash, no holdings to sell) are recorded and never
abort a tick.

Batch mode runs ticks back to back; live mode pins each tick to a wall
clock and drops (never defers) ticks it falls behind on, recording the
skip. The three experiment arms share this single loop: artificial
markets run with an empty human queue, human-only markets with an empty
agent set, hybrid with both.

Determinism: given (population, claim, config, seed, human-order trace)
the full trade log and the closing price are reproducible bit for bit,
on either kernel backend.
"""

from __future__ import annotations

import logging
import threading
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import kernels, lmsr
from .agents import Population
from .errors import DataError, MarketError
from .features import ClaimRecord, ClaimSet, N_FEATURES

logger = logging.getLogger(__name__)

ARTIFICIAL = "artificial"
HYBRID = "hybrid"
HUMAN_ONLY = "human-only"
MODES = (ARTIFICIAL, HYBRID, HUMAN_ONLY)

BUY = "buy"
SELL = "sell"
ACTIONS = (BUY, SELL)

TRADE_BUFFER_MIN = 65536


@dataclass(frozen=True)
class SimConfig:
    """Run-shape parameters for one market."""

    ticks: int = 43200
    tick_interval: float = 0.0
    effective_tick_floor: int = 39000
    seed: int = 0
    lam: float | None = None
    margin: float | None = None

    def __post_init__(self):
        if self.ticks < 1:
            raise DataError(f"ticks must be >= 1, got {self.ticks}")
        if not (0 <= self.effective_tick_floor <= self.ticks):
            raise DataError(
                "effective_tick_floor must lie in [0, ticks], got "
                f"{self.effective_tick_floor} with ticks={self.ticks}"
            )
        if self.tick_interval < 0:
            raise DataError("tick_interval must be >= 0")


@dataclass(frozen=True)
class HumanOrder:
    """A single-share human order; queued, then executed at a tick edge."""

    participant: str
    side: str
    action: str
    order_id: str = ""

    def __post_init__(self):
        if self.side not in lmsr.SIDES:
            raise MarketError(f"side must be yes or no, got {self.side!r}")
        if self.action not in ACTIONS:
            raise MarketError(f"action must be buy or sell, got {self.action!r}")


@dataclass(frozen=True)
class TradeRecord:
    market_id: str
    tick: int
    kind: str  # agent | human
    trader: str
    side: str
    shares: int
    cost: float
    price_after: float
    order_id: str = ""

    def to_dict(self) -> dict:
        d = {
            "type": "trade",
            "market_id": self.market_id,
            "tick": self.tick,
            "kind": self.kind,
            "trader": self.trader,
            "side": self.side,
            "shares": self.shares,
            "cost": self.cost,
            "price_after": self.price_after,
        }
        if self.order_id:
            d["order_id"] = self.order_id
        return d


@dataclass(frozen=True)
class RejectionRecord:
    market_id: str
    tick: int
    trader: str
    side: str
    action: str
    reason: str
    order_id: str = ""

    def to_dict(self) -> dict:
        d = {
            "type": "rejection",
            "market_id": self.market_id,
            "tick": self.tick,
            "trader": self.trader,
            "side": self.side,
            "action": self.action,
            "reason": self.reason,
        }
        if self.order_id:
            d["order_id"] = self.order_id
        return d


@dataclass
class HumanBook:
    """Per-participant bookkeeping inside one market."""

    cash: float
    yes: int = 0
    no: int = 0
    trades: int = 0

    def holdings(self, side: str) -> int:
        return self.yes if side == lmsr.YES else self.no

    def adjust(self, side: str, delta: int) -> None:
        if side == lmsr.YES:
            self.yes += delta
        else:
            self.no += delta


@dataclass
class MarketRun:
    """Everything a finished market leaves behind."""

    market_id: str
    claim_id: str
    mode: str
    seed: int
    b: float
    lam: float
    margin: float
    ticks_total: int
    ticks_processed: int
    skipped_ticks: tuple[int, ...]
    tick_floor_met: bool
    closing_price: float
    trades: list[TradeRecord]
    rejections: list[RejectionRecord]
    n_agents: int
    participation_fraction: float
    mean_active: float
    winner: str | None = None

    @property
    def display_price(self) -> float:
        return lmsr.round_price(self.closing_price)

    @property
    def prediction(self) -> str:
        return lmsr.predict(self.closing_price)

    def summary(self) -> dict:
        return {
            "market_id": self.market_id,
            "claim_id": self.claim_id,
            "mode": self.mode,
            "seed": self.seed,
            "b": self.b,
            "lam": self.lam,
            "margin": self.margin,
            "ticks_total": self.ticks_total,
            "ticks_processed": self.ticks_processed,
            "skipped_ticks": len(self.skipped_ticks),
            "tick_floor_met": self.tick_floor_met,
            "closing_price": self.closing_price,
            "display_price": self.display_price,
            "prediction": self.prediction,
            "trade_count": len(self.trades),
            "rejection_count": len(self.rejections),
            "n_agents": self.n_agents,
            "participation_fraction": self.participation_fraction,
            "mean_active": self.mean_active,
            "winner": self.winner,
        }


class MarketSession:
    """Single-market tick loop with agent arrays, human books, and an
    optional journal sink. Not thread-safe except where noted: the
    tick loop is the sole mutator; submit() may be called from any
    thread; snapshot() takes the session lock."""

    def __init__(
        self,
        market_id: str,
        claim: ClaimRecord,
        population: Population | None,
        config: SimConfig,
        *,
        b: float,
        lam: float,
        margin: float,
        agent_cash: float,
        mode: str = ARTIFICIAL,
        human_cash: float = 25.0,
        journal=None,
        listener=None,
        backend: str | None = None,
        record_trades: bool = True,
    ):
        if mode not in MODES:
            raise DataError(f"mode must be one of {MODES}, got {mode!r}")
        x = np.asarray(claim.features, dtype=np.float64)
        if x.shape != (N_FEATURES,):
            raise DataError(f"claim features must have {N_FEATURES} dims")
        if np.isnan(x).any() or (x < 0.0).any() or (x > 1.0).any():
            raise DataError(
                f"claim {claim.claim_id!r} features are not normalized to [0, 1]"
            )
        if config.lam is not None:
            lam = config.lam
        if config.margin is not None:
            margin = config.margin
        if not (0.0 <= lam <= 1.0):
            raise DataError(f"lambda must lie in [0, 1], got {lam}")
        if margin < 0.0:
            raise DataError(f"percent-difference margin must be >= 0, got {margin}")

        self.market_id = market_id
        self.claim = claim
        self.config = config
        self.mode = mode
        self.lam = lam
        self.margin = margin
        self.agent_cash0 = float(agent_cash)
        self.human_cash0 = float(human_cash)
        self.backend = backend
        self.record_trades = record_trades
        self.journal = journal
        self.listener = listener
        self.seed = config.seed

        self.market = lmsr.Market(market_id=market_id, claim_id=claim.claim_id, b=b)
        self.market.open()

        use_agents = mode != HUMAN_ONLY and population is not None and len(population) > 0
        if use_agents:
            arrays = population.arrays()
            self._centers = arrays["centers"]
            self.dist = np.sqrt(((self._centers - x) ** 2).sum(axis=1))
            self.side_yes = arrays["side_yes"]
            self.base_radius = arrays["base_radius"]
            self.reservation = arrays["reservation"]
            self.sensitivity = arrays["sensitivity"]
            self.uids = arrays["uids"]
        else:
            self.dist = np.empty(0, dtype=np.float64)
            self.side_yes = np.empty(0, dtype=np.int8)
            self.base_radius = np.empty(0, dtype=np.float64)
            self.reservation = np.empty(0, dtype=np.float64)
            self.sensitivity = np.empty(0, dtype=np.float64)
            self.uids = np.empty(0, dtype=np.uint64)
        n = self.dist.shape[0]
        self.n_agents = n
        self.agent_cash = np.full(n, self.agent_cash0, dtype=np.float64)
        self.agent_holdings = np.zeros(n, dtype=np.int64)
        self.agent_trade_counts = np.zeros(n, dtype=np.int64)
        cap = max(TRADE_BUFFER_MIN, n)
        self._buf_tick = np.zeros(cap, dtype=np.int64)
        self._buf_agent = np.zeros(cap, dtype=np.int64)
        self._buf_cost = np.zeros(cap, dtype=np.float64)
        self._buf_price = np.zeros(cap, dtype=np.float64)

        self.tick = 0
        self.trades: list[TradeRecord] = []
        self.rejections: list[RejectionRecord] = []
        self.skipped: list[int] = []
        self.agent_trade_total = 0
        self.human_books: dict[str, HumanBook] = {}
        self.queue: deque[HumanOrder] = deque()
        self.lock = threading.Lock()
        self.winner: str | None = None
        self._closing_price: float | None = None

        self._emit(
            {
                "type": "market_open",
                "market_id": market_id,
                "claim_id": claim.claim_id,
                "mode": mode,
                "b": b,
                "seed": self.seed,
                "lam": lam,
                "margin": margin,
                "ticks": config.ticks,
                "agent_count": n,
                "agent_cash": self.agent_cash0,
                "human_cash": self.human_cash0,
            }
        )

    # ------------------------------------------------------------------ #
    # journal / listener plumbing

    def _emit(self, record: dict) -> None:
        if self.journal is not None:
            self.journal.append(record)
        if self.listener is not None:
            self.listener(record)

    def _commit(self) -> None:
        if self.journal is not None:
            self.journal.commit()

    # ------------------------------------------------------------------ #
    # agent phase

    def _agent_span(self, t_end: int) -> None:
        """Run agent phases for ticks [self.tick, t_end)."""
        if self.n_agents == 0 or self.mode == HUMAN_ONLY:
            self.tick = max(self.tick, t_end)
            return
        while self.tick < t_end:
            used, next_tick, q_yes, q_no = kernels.run_span(
                self.tick,
                t_end,
                self.market.q_yes,
                self.market.q_no,
                self.market.b,
                self.lam,
                self.margin,
                self.seed,
                self.dist,
                self.side_yes,
                self.base_radius,
                self.reservation,
                self.sensitivity,
                self.uids,
                self.agent_cash,
                self.agent_holdings,
                self.agent_trade_counts,
                self._buf_tick,
                self._buf_agent,
                self._buf_cost,
                self._buf_price,
                backend=self.backend,
            )
            self.market.q_yes = q_yes
            self.market.q_no = q_no
            self.market.trade_count += used
            self.agent_trade_total += used
            if used and (self.record_trades or self.journal or self.listener):
                self._flush_agent_trades(used)
            if self.journal is not None and used:
                self._emit(
                    {
                        "type": "checkpoint",
                        "market_id": self.market_id,
                        "tick": next_tick - 1,
                        "q_yes": q_yes,
                        "q_no": q_no,
                    }
                )
                self._commit()
            self.tick = next_tick

    def _flush_agent_trades(self, used: int) -> None:
        for j in range(used):
            i = int(self._buf_agent[j])
            rec = TradeRecord(
                market_id=self.market_id,
                tick=int(self._buf_tick[j]),
                kind="agent",
                trader=str(int(self.uids[i])),
                side=lmsr.YES if self.side_yes[i] == 1 else lmsr.NO,
                shares=1,
                cost=float(self._buf_cost[j]),
                price_after=float(self._buf_price[j]),
            )
            if self.record_trades:
                self.trades.append(rec)
            self._emit(rec.to_dict())

    # ------------------------------------------------------------------ #
    # human phase

    def submit(self, order: HumanOrder) -> int:
        """Queue a human order for the next processed tick. Thread-safe.
        Returns the queue position (0 = next to execute)."""
        if self.mode == ARTIFICIAL:
            raise MarketError("artificial markets accept no human orders")
        if self.market.status != lmsr.OPEN:
            raise MarketError(f"market {self.market_id} is not open")
        with self.lock:
            self.queue.append(order)
            return len(self.queue) - 1

    def _book(self, participant: str) -> HumanBook:
        book = self.human_books.get(participant)
        if book is None:
            book = HumanBook(cash=self.human_cash0)
            self.human_books[participant] = book
        return book

    def _execute_human(self, order: HumanOrder, tick: int):
        book = self._book(order.participant)
        shares = 1 if order.action == BUY else -1
        if order.action == SELL and book.holdings(order.side) < 1:
            rec = RejectionRecord(
                market_id=self.market_id,
                tick=tick,
                trader=order.participant,
                side=order.side,
                action=order.action,
                reason="insufficient holdings",
                order_id=order.order_id,
            )
            self.rejections.append(rec)
            self._emit(rec.to_dict())
            return rec
        paid = self.market.quote(order.side, float(shares))
        if order.action == BUY and paid > book.cash:
            rec = RejectionRecord(
                market_id=self.market_id,
                tick=tick,
                trader=order.participant,
                side=order.side,
                action=order.action,
                reason="insufficient cash",
                order_id=order.order_id,
            )
            self.rejections.append(rec)
            self._emit(rec.to_dict())
            return rec
        fill = self.market.execute(order.side, float(shares))
        book.cash -= fill.cost
        book.adjust(order.side, shares)
        book.trades += 1
        rec = TradeRecord(
            market_id=self.market_id,
            tick=tick,
            kind="human",
            trader=order.participant,
            side=order.side,
            shares=shares,
            cost=fill.cost,
            price_after=fill.price_after,
            order_id=order.order_id,
        )
        self.trades.append(rec)
        self._emit(rec.to_dict())
        return rec

    def _drain_queue(self, tick: int) -> None:
        while True:
            with self.lock:
                if not self.queue:
                    return
                order = self.queue.popleft()
            self._execute_human(order, tick)

    # ------------------------------------------------------------------ #
    # tick loops

    def run_batch(self, trace=None) -> float:
        """Run all remaining ticks back to back. trace is an iterable of
        (tick, HumanOrder) pairs; within one tick, trace order is the
        FIFO order. Returns the exact closing price."""
        groups: dict[int, list[HumanOrder]] = {}
        if trace:
            if self.mode == ARTIFICIAL:
                raise MarketError("artificial markets accept no human orders")
            for tick, order in trace:
                if tick < self.tick or tick >= self.config.ticks:
                    raise DataError(
                        f"trace order at tick {tick} outside run range "
                        f"[{self.tick}, {self.config.ticks})"
                    )
                groups.setdefault(int(tick), []).append(order)
        for h in sorted(groups):
            self._agent_span(h + 1)
            for order in groups[h]:
                self._execute_human(order, h)
        self._agent_span(self.config.ticks)
        self._commit()
        return self.close()

    def step(self, n_ticks: int = 1) -> None:
        """Advance n processed ticks, draining the live queue after each
        agent phase. Manual clock for tests and stepped service mode."""
        for _ in range(n_ticks):
            if self.tick >= self.config.ticks:
                break
            k = self.tick
            self._agent_span(k + 1)
            self._drain_queue(k)
        self._commit()

    def run_live(self, clock=time.monotonic, sleep=time.sleep, on_tick=None) -> float:
        """Wall-clock loop: tick k fires at start + (k+1)*interval. A tick
        more than one full interval late is dropped and logged, never
        executed out of order."""
        interval = self.config.tick_interval
        if interval <= 0:
            raise MarketError("run_live requires tick_interval > 0")
        start = clock()
        while self.tick < self.config.ticks:
            k = self.tick
            deadline = start + (k + 1) * interval
            now = clock()
            if now > deadline + interval:
                self.skipped.append(k)
                self.tick = k + 1
                self._emit(
                    {"type": "tick_skip", "market_id": self.market_id, "tick": k}
                )
                continue
            if now < deadline:
                sleep(deadline - now)
            self._agent_span(k + 1)
            self._drain_queue(k)
            self._commit()
            if on_tick is not None:
                on_tick(self, k)
        processed = self.ticks_processed
        if processed < self.config.effective_tick_floor:
            logger.warning(
                "market %s processed %d ticks, below floor %d",
                self.market_id,
                processed,
                self.config.effective_tick_floor,
            )
        return self.close()

    # ------------------------------------------------------------------ #
    # lifecycle tail

    @property
    def ticks_processed(self) -> int:
        return self.tick - len(self.skipped)

    def close(self) -> float:
        with self.lock:
            price = self.market.close()
            self._closing_price = price
        self._emit(
            {
                "type": "market_close",
                "market_id": self.market_id,
                "tick": self.tick,
                "closing_price": price,
                "q_yes": self.market.q_yes,
                "q_no": self.market.q_no,
            }
        )
        self._commit()
        return price

    def settle(self, outcome: str) -> None:
        """Redeem winning shares at $1 for agents and humans alike."""
        winner = lmsr.YES if outcome == "R" else lmsr.NO
        with self.lock:
            self.market.settle(winner)
            self.winner = winner
            win_mask = self.side_yes == (1 if winner == lmsr.YES else 0)
            self.agent_cash[win_mask] += self.agent_holdings[win_mask].astype(
                np.float64
            )
            for book in self.human_books.values():
                book.cash += float(book.holdings(winner))
        self._emit(
            {"type": "settle", "market_id": self.market_id, "winner": winner}
        )
        self._commit()

    def agent_pnl(self) -> np.ndarray:
        """Per-agent cash delta since the market opened (includes any
        settlement redemptions)."""
        return self.agent_cash - self.agent_cash0

    def participation_fraction(self) -> float:
        if self.n_agents == 0:
            return 0.0
        return float((self.agent_trade_counts > 0).mean())

    def mean_active(self) -> float:
        processed = self.ticks_processed
        if self.n_agents == 0 or processed == 0:
            return 0.0
        return self.agent_trade_total / (processed * self.n_agents)

    def snapshot(self, participant: str | None = None) -> dict:
        """Read-only consistent view as of the latest completed tick."""
        with self.lock:
            snap = self.market.snapshot()
            snap["tick"] = self.tick
            snap["ticks_total"] = self.config.ticks
            if participant is not None:
                book = self.human_books.get(participant)
                if book is None:
                    book = HumanBook(cash=self.human_cash0)
                snap["cash"] = lmsr.quantize_money(book.cash)
                snap["holdings"] = {"yes": book.yes, "no": book.no}
                snap["trades"] = book.trades
            return snap

    def to_run(self) -> MarketRun:
        if self._closing_price is None:
            raise MarketError(f"market {self.market_id} has not closed")
        return MarketRun(
            market_id=self.market_id,
            claim_id=self.claim.claim_id,
            mode=self.mode,
            seed=self.seed,
            b=self.market.b,
            lam=self.lam,
            margin=self.margin,
            ticks_total=self.config.ticks,
            ticks_processed=self.ticks_processed,
            skipped_ticks=tuple(self.skipped),
            tick_floor_met=self.ticks_processed >= self.config.effective_tick_floor,
            closing_price=self._closing_price,
            trades=self.trades,
            rejections=self.rejections,
            n_agents=self.n_agents,
            participation_fraction=self.participation_fraction(),
            mean_active=self.mean_active(),
            winner=self.winner,
        )


def run_market(
    population: Population | None,
    claim: ClaimRecord,
    config: SimConfig,
    *,
    b: float,
    lam: float,
    margin: float,
    agent_cash: float = 500.0,
    mode: str = ARTIFICIAL,
    trace=None,
    journal=None,
    backend: str | None = None,
    human_cash: float = 25.0,
    settle_outcome: str | None = None,
    record_trades: bool = True,
) -> MarketRun:
    """Convenience wrapper: build a session, run it in batch mode, close,
    optionally settle, and return the MarketRun."""
    session = MarketSession(
        market_id=f"{claim.claim_id}-{mode}",
        claim=claim,
        population=population,
        config=config,
        b=b,
        lam=lam,
        margin=margin,
        agent_cash=agent_cash,
        mode=mode,
        human_cash=human_cash,
        journal=journal,
        backend=backend,
        record_trades=record_trades,
    )
    session.run_batch(trace=trace)
    if settle_outcome is not None:
        session.settle(settle_outcome)
    return session.to_run()


def run_artificial(trained, claim: ClaimRecord, config: SimConfig) -> MarketRun:
    """Agents-only run of one held-out claim under a trained market
    (anything carrying .population and .config)."""
    tc = trained.config
    return run_market(
        trained.population,
        claim,
        config,
        b=tc.liquidity,
        lam=tc.lam,
        margin=tc.percent_difference,
        agent_cash=tc.initial_agent_cash,
        mode=ARTIFICIAL,
    )


def final_prediction(closing_price_yes: float) -> str:
    """Categorical market call: R at or above 0.5, NR below."""
    return lmsr.predict(closing_price_yes)


def mae(prices, outcomes) -> float:
    """Mean absolute error between YES prices and outcomes encoded
    R=1, NR=0."""
    prices = list(prices)
    outcomes = list(outcomes)
    if len(prices) != len(outcomes):
        raise DataError(
            f"length mismatch: {len(prices)} prices vs {len(outcomes)} outcomes"
        )
    if not prices:
        raise DataError("mae of an empty claim list")
    encoded = [1.0 if o == "R" else 0.0 for o in outcomes]
    return sum(abs(p - e) for p, e in zip(prices, encoded)) / len(prices)


@dataclass(frozen=True)
class RunResult:
    """Minimal evaluate() input when full MarketRun objects are not at
    hand (e.g. published closing prices)."""

    claim_id: str
    closing_price: float
    mode: str


@dataclass
class EvaluationReport:
    """Per-claim join of price vs truth plus per-discipline aggregates."""

    rows: list[dict]
    mae_by: dict[str, dict[str, float]]  # domain -> mode -> MAE
    accuracy_by: dict[str, dict[str, float]]  # domain -> mode -> accuracy
    overall_mae: dict[str, float]  # mode -> MAE
    overall_accuracy: dict[str, float]  # mode -> accuracy

    def to_csv(self, path) -> None:
        import csv as _csv

        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = _csv.writer(fh, lineterminator="\n")
            writer.writerow(["discipline", "mode", "n_claims", "mae", "accuracy"])
            for domain in sorted(self.mae_by):
                for mode in sorted(self.mae_by[domain]):
                    n = sum(
                        1
                        for r in self.rows
                        if r["domain"] == domain and r["mode"] == mode
                    )
                    writer.writerow(
                        [
                            domain,
                            mode,
                            n,
                            f"{self.mae_by[domain][mode]:.6f}",
                            f"{self.accuracy_by[domain][mode]:.6f}",
                        ]
                    )


def evaluate(runs, truth: ClaimSet) -> EvaluationReport:
    """Join finished runs against ground-truth outcomes and aggregate
    MAE/accuracy per discipline and mode."""
    runs = list(runs)
    if not runs:
        raise DataError("evaluate called with no runs")
    rows = []
    for run in runs:
        rec = truth.get(run.claim_id)  # raises DataError naming the claim
        if rec.outcome is None:
            raise DataError(f"claim {run.claim_id!r} has no ground-truth outcome")
        price = run.closing_price
        prediction = final_prediction(price)
        encoded = 1.0 if rec.outcome == "R" else 0.0
        rows.append(
            {
                "claim_id": run.claim_id,
                "domain": rec.domain,
                "mode": run.mode,
                "closing_price": price,
                "prediction": prediction,
                "outcome": rec.outcome,
                "abs_error": abs(price - encoded),
                "correct": prediction == rec.outcome,
            }
        )
    mae_by: dict[str, dict[str, float]] = {}
    accuracy_by: dict[str, dict[str, float]] = {}
    overall_mae: dict[str, float] = {}
    overall_accuracy: dict[str, float] = {}
    keys = {(r["domain"], r["mode"]) for r in rows}
    for domain, mode in sorted(keys):
        sel = [r for r in rows if r["domain"] == domain and r["mode"] == mode]
        mae_by.setdefault(domain, {})[mode] = sum(
            r["abs_error"] for r in sel
        ) / len(sel)
        accuracy_by.setdefault(domain, {})[mode] = sum(
            1.0 for r in sel if r["correct"]
        ) / len(sel)
    for mode in sorted({r["mode"] for r in rows}):
        sel = [r for r in rows if r["mode"] == mode]
        overall_mae[mode] = sum(r["abs_error"] for r in sel) / len(sel)
        overall_accuracy[mode] = sum(1.0 for r in sel if r["correct"]) / len(sel)
    return EvaluationReport(
        rows=rows,
        mae_by=mae_by,
        accuracy_by=accuracy_by,
        overall_mae=overall_mae,
        overall_accuracy=overall_accuracy,
    )
