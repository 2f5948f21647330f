"""Trading-event service: five claim markets per event, token sessions,
FIFO order queues, and a sealed bonus market.

Each event runs exactly five markets. Participants authenticate with a
pre-issued token and get an independent cash account in every market.
At open, one market is drawn uniformly (keyed by the event seed) as the
bonus market whose final cash becomes the performance payout; its
identity appears in no response until the event closes. Every state
change lands in an append-only journal, and recover() rebuilds a service
from that journal, halting at the first corrupt entry with a report.

The HTTP layer is a thin FastAPI app over the MarketService object; all
money figures cross the wire quantized to 4 decimals and prices to 3,
while internal books keep exact doubles for replay equality.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import logging
import queue
import secrets
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import journal as journal_mod
from . import lmsr, sim
from ._rng import derive_seed, uniform
from .agents import Population
from .errors import DataError, JournalError, MarketError
from .features import ClaimRecord, ClaimSet, N_FEATURES

logger = logging.getLogger(__name__)

SCHEDULED = "scheduled"
OPEN = "open"
CLOSED = "closed"
SETTLED = "settled"

EVENT_MARKETS = 5
SHOW_UP_FEE = 40.0
ELIGIBLE_TRADES = 3
DEFAULT_HUMAN_CASH = 25.0

SERVICE_RECORD_TYPES = ("event_create", "event_open", "event_close", "payout")


@dataclass(frozen=True)
class PayoutRecord:
    """One participant's settlement for one event."""

    participant: str
    trades: int
    eligible: bool
    market_cash: float
    show_up: float
    total: float

    def to_dict(self) -> dict:
        return {
            "participant": self.participant,
            "trades": self.trades,
            "eligible": self.eligible,
            "market_cash": self.market_cash,
            "show_up": self.show_up,
            "total": self.total,
        }


@dataclass
class EventConfig:
    """Frozen-at-create parameters for one event."""

    event_id: str
    seed: int
    b: float = 30.0
    ticks: int = 43200
    tick_interval: float = 0.0
    mode: str = sim.HUMAN_ONLY
    human_cash: float = DEFAULT_HUMAN_CASH
    lam: float = 0.25
    margin: float = 0.02
    agent_cash: float = 500.0

    def __post_init__(self):
        if self.mode not in (sim.HUMAN_ONLY, sim.HYBRID):
            raise DataError(
                f"event mode must be {sim.HUMAN_ONLY!r} or {sim.HYBRID!r}, "
                f"got {self.mode!r}"
            )
        if self.b <= 0:
            raise DataError(f"liquidity must be positive, got {self.b}")
        if self.human_cash <= 0:
            raise DataError(f"human cash must be positive, got {self.human_cash}")


class Event:
    """One five-market trading event and its lifecycle state."""

    def __init__(
        self,
        config: EventConfig,
        claims: list[ClaimRecord],
        participants: dict[str, str],
        population: Population | None = None,
    ):
        if len(claims) != EVENT_MARKETS:
            raise DataError(
                f"an event needs exactly {EVENT_MARKETS} claims, got {len(claims)}"
            )
        if len({c.claim_id for c in claims}) != EVENT_MARKETS:
            raise DataError("event claims must be distinct")
        if config.mode == sim.HYBRID and population is None:
            raise DataError("hybrid events need a trained population")
        if not participants:
            raise DataError("an event needs at least one participant")
        self.config = config
        self.claims = list(claims)
        self.participants = dict(participants)  # name -> token
        self.tokens = {t: n for n, t in participants.items()}
        if len(self.tokens) != len(self.participants):
            raise DataError("participant tokens must be distinct")
        self.population = population
        self.status = SCHEDULED
        self.money_market_id: str | None = None
        self.outcomes: dict[str, str] | None = None
        self.sessions: dict[str, sim.MarketSession] = {}
        self.payouts: list[PayoutRecord] = []
        self.tick_lock = threading.Lock()
        self._subs: list[queue.SimpleQueue] = []
        self._subs_lock = threading.Lock()
        self._ticker: threading.Thread | None = None
        self._stop = threading.Event()
        self._order_seq = itertools.count(1)

    @property
    def event_id(self) -> str:
        return self.config.event_id

    def market_id(self, claim_id: str) -> str:
        return f"{self.event_id}:{claim_id}"

    @property
    def market_ids(self) -> list[str]:
        return [self.market_id(c.claim_id) for c in self.claims]

    @property
    def tick(self) -> int:
        if not self.sessions:
            return 0
        return min(s.tick for s in self.sessions.values())

    # ---------------------------------------------------------------- #
    # fan-out

    def broadcast(self, record: dict) -> None:
        with self._subs_lock:
            subs = list(self._subs)
        for q in subs:
            q.put(record)

    def subscribe(self) -> queue.SimpleQueue:
        q: queue.SimpleQueue = queue.SimpleQueue()
        with self._subs_lock:
            self._subs.append(q)
        return q

    def unsubscribe(self, q) -> None:
        with self._subs_lock:
            try:
                self._subs.remove(q)
            except ValueError:
                pass


@dataclass
class RecoveryReport:
    """What a journal recovery managed to rebuild."""

    records_applied: int
    corrupt_line: int | None = None
    corrupt_reason: str = ""
    truncated: bool = False
    events: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.corrupt_line is None


class MarketService:
    """Owns events, their market sessions, and the shared journal. All
    lifecycle transitions take the service lock; per-market mutation is
    serialized by each event's tick lock."""

    def __init__(
        self,
        claims: ClaimSet | None = None,
        *,
        journal_path=None,
        admin_token: str = "admin",
        population: Population | None = None,
    ):
        self.claims = claims
        self.default_population = population
        self.admin_token = admin_token
        self.journal = (
            journal_mod.Journal(journal_path) if journal_path is not None else None
        )
        self.events: dict[str, Event] = {}
        self.lock = threading.RLock()

    # ---------------------------------------------------------------- #
    # lookup helpers

    def _event(self, event_id: str) -> Event:
        event = self.events.get(event_id)
        if event is None:
            raise DataError(f"unknown event {event_id!r}")
        return event

    def find_market(self, market_id: str) -> tuple[Event, sim.MarketSession]:
        for event in self.events.values():
            session = event.sessions.get(market_id)
            if session is not None:
                return event, session
        raise DataError(f"unknown market {market_id!r}")

    def login(self, token: str) -> tuple[Event, str]:
        for event in self.events.values():
            name = event.tokens.get(token)
            if name is not None:
                return event, name
        raise MarketError("unknown token")

    def _emit(self, record: dict) -> None:
        if self.journal is not None:
            self.journal.append(record)
            self.journal.commit()

    # ---------------------------------------------------------------- #
    # lifecycle

    def create_event(
        self,
        event_id: str,
        claim_ids: list[str],
        participants: list[str],
        *,
        seed: int,
        b: float = 30.0,
        ticks: int = 43200,
        tick_interval: float = 0.0,
        mode: str = sim.HUMAN_ONLY,
        human_cash: float = DEFAULT_HUMAN_CASH,
        lam: float = 0.25,
        margin: float = 0.02,
        agent_cash: float = 500.0,
        population: Population | None = None,
        tokens: dict[str, str] | None = None,
    ) -> Event:
        with self.lock:
            if event_id in self.events:
                raise DataError(f"event {event_id!r} already exists")
            if self.claims is None:
                raise DataError("service has no claim catalog")
            if len(set(participants)) != len(participants):
                raise DataError("participant names must be distinct")
            claims = [self.claims.get(cid) for cid in claim_ids]
            config = EventConfig(
                event_id=event_id,
                seed=seed,
                b=b,
                ticks=ticks,
                tick_interval=tick_interval,
                mode=mode,
                human_cash=human_cash,
                lam=lam,
                margin=margin,
                agent_cash=agent_cash,
            )
            if tokens is None:
                tokens = {name: secrets.token_hex(12) for name in participants}
            else:
                missing = set(participants) - set(tokens)
                if missing:
                    raise DataError(f"tokens missing for {sorted(missing)}")
                tokens = {name: tokens[name] for name in participants}
            pop = population if population is not None else self.default_population
            if config.mode == sim.HUMAN_ONLY:
                pop = None
            event = Event(config, claims, tokens, population=pop)
            self.events[event_id] = event
            self._emit(
                {
                    "type": "event_create",
                    "event_id": event_id,
                    "claim_ids": list(claim_ids),
                    "claims": [_claim_dict(c) for c in claims],
                    "participants": tokens,
                    "config": dataclasses.asdict(config),
                }
            )
            return event

    def open_event(self, event_id: str) -> Event:
        with self.lock:
            event = self._event(event_id)
            if event.status != SCHEDULED:
                raise MarketError(f"event {event_id!r} is {event.status}, not openable")
            draw = uniform(derive_seed(event.config.seed, "money-market", event_id), 0, 0)
            index = int(draw * EVENT_MARKETS)
            event.money_market_id = event.market_id(event.claims[index].claim_id)
            self._open_sessions(event, journal=self.journal)
            event.status = OPEN
            self._emit(
                {
                    "type": "event_open",
                    "event_id": event_id,
                    "money_market_id": event.money_market_id,
                }
            )
            if event.config.tick_interval > 0:
                self._start_ticker(event)
            event.broadcast({"type": "event_open", "event_id": event_id})
            return event

    def _open_sessions(self, event: Event, journal=None) -> None:
        cfg = event.config
        sim_config = sim.SimConfig(
            ticks=cfg.ticks,
            tick_interval=cfg.tick_interval,
            effective_tick_floor=0,
            seed=derive_seed(cfg.seed, "event", event.event_id),
        )
        for claim in event.claims:
            market_id = event.market_id(claim.claim_id)
            event.sessions[market_id] = sim.MarketSession(
                market_id,
                claim,
                event.population,
                sim_config,
                b=cfg.b,
                lam=cfg.lam,
                margin=cfg.margin,
                agent_cash=cfg.agent_cash,
                mode=cfg.mode,
                human_cash=cfg.human_cash,
                journal=journal,
                listener=event.broadcast,
            )

    def _start_ticker(self, event: Event) -> None:
        def run():
            interval = event.config.tick_interval
            while not event._stop.wait(interval):
                with event.tick_lock:
                    if event.status != OPEN or event.tick >= event.config.ticks:
                        return
                    for session in event.sessions.values():
                        session.step(1)

        event._ticker = threading.Thread(
            target=run, name=f"ticker-{event.event_id}", daemon=True
        )
        event._ticker.start()

    def step_event(self, event_id: str, ticks: int = 1) -> int:
        """Advance every market of an open event by whole ticks. Manual
        clock for stepped deployments and tests."""
        event = self._event(event_id)
        if event.status != OPEN:
            raise MarketError(f"event {event_id!r} is not open")
        if ticks < 1:
            raise DataError(f"ticks must be >= 1, got {ticks}")
        with event.tick_lock:
            for _ in range(ticks):
                if event.tick >= event.config.ticks:
                    break
                for session in event.sessions.values():
                    session.step(1)
        return event.tick

    def submit_order(
        self, market_id: str, participant: str, side: str, action: str
    ) -> dict:
        event, session = self.find_market(market_id)
        if event.status != OPEN:
            raise MarketError(f"event {event.event_id!r} is not open")
        if participant not in event.participants:
            raise DataError(f"unknown participant {participant!r}")
        order_id = f"{event.event_id}-o{next(event._order_seq)}"
        order = sim.HumanOrder(
            participant=participant, side=side, action=action, order_id=order_id
        )
        position = session.submit(order)
        return {"order_id": order_id, "position": position, "market_id": market_id}

    def close_event(
        self, event_id: str, outcomes: dict[str, str] | None = None
    ) -> list[PayoutRecord]:
        with self.lock:
            event = self._event(event_id)
            if event.status != OPEN:
                raise MarketError(f"event {event_id!r} is not open")
            event._stop.set()
            if event._ticker is not None:
                event._ticker.join(timeout=10.0)
            if outcomes is not None:
                unknown = set(outcomes) - {c.claim_id for c in event.claims}
                if unknown:
                    raise DataError(f"outcomes name unknown claims {sorted(unknown)}")
                missing = {c.claim_id for c in event.claims} - set(outcomes)
                if missing:
                    raise DataError(f"outcomes missing for claims {sorted(missing)}")
                bad = {v for v in outcomes.values() if v not in ("R", "NR")}
                if bad:
                    raise DataError(f"outcomes must be R or NR, got {sorted(bad)}")
            with event.tick_lock:
                for session in event.sessions.values():
                    session._drain_queue(session.tick)
                    session.close()
                if outcomes is not None:
                    for claim in event.claims:
                        session = event.sessions[event.market_id(claim.claim_id)]
                        session.settle(outcomes[claim.claim_id])
                event.status = SETTLED if outcomes is not None else CLOSED
                event.outcomes = dict(outcomes) if outcomes is not None else None
                event.payouts = self._compute_payouts(event)
            self._emit(
                {
                    "type": "event_close",
                    "event_id": event_id,
                    "status": event.status,
                    "outcomes": event.outcomes,
                }
            )
            for record in event.payouts:
                self._emit(
                    {"type": "payout", "event_id": event_id, **record.to_dict()}
                )
            event.broadcast(
                {
                    "type": "event_close",
                    "event_id": event_id,
                    "status": event.status,
                    "money_market_id": event.money_market_id,
                }
            )
            return event.payouts

    def _compute_payouts(self, event: Event) -> list[PayoutRecord]:
        money_session = event.sessions[event.money_market_id]
        records = []
        for name in sorted(event.participants):
            trades = sum(
                book.trades
                for session in event.sessions.values()
                for pname, book in session.human_books.items()
                if pname == name
            )
            book = money_session.human_books.get(name)
            cash = book.cash if book is not None else event.config.human_cash
            eligible = trades >= ELIGIBLE_TRADES
            market_cash = lmsr.quantize_money(cash) if eligible else 0.0
            total = lmsr.quantize_money(market_cash + SHOW_UP_FEE)
            records.append(
                PayoutRecord(
                    participant=name,
                    trades=trades,
                    eligible=eligible,
                    market_cash=market_cash,
                    show_up=SHOW_UP_FEE,
                    total=total,
                )
            )
        return records

    def shutdown(self) -> None:
        with self.lock:
            for event in self.events.values():
                event._stop.set()
                if event._ticker is not None:
                    event._ticker.join(timeout=10.0)
            if self.journal is not None:
                self.journal.close()

    # ---------------------------------------------------------------- #
    # views

    def event_summary(self, event: Event, *, admin: bool = False) -> dict:
        summary = {
            "event_id": event.event_id,
            "status": event.status,
            "mode": event.config.mode,
            "tick": event.tick,
            "ticks": event.config.ticks,
            "tick_interval": event.config.tick_interval,
            "markets": [
                self.market_summary(event.sessions[mid])
                if event.sessions
                else {"market_id": mid}
                for mid in event.market_ids
            ],
            "participants": sorted(event.participants),
        }
        if event.status in (CLOSED, SETTLED):
            summary["money_market_id"] = event.money_market_id
            if event.outcomes is not None:
                summary["outcomes"] = event.outcomes
        return summary

    def market_summary(self, session: sim.MarketSession) -> dict:
        return {
            "market_id": session.market_id,
            "claim_id": session.claim.claim_id,
            "status": session.market.status,
            "tick": session.tick,
            "ticks_total": session.config.ticks,
            "price": session.market.display_price,
            "trade_count": session.market.trade_count,
            "winner": session.market.winner,
        }

    def market_snapshot(self, market_id: str, participant: str | None = None) -> dict:
        _, session = self.find_market(market_id)
        snap = session.snapshot(participant)
        snap.pop("q_yes", None)
        snap.pop("q_no", None)
        return snap

    def market_trades(self, market_id: str, since: int = 0) -> dict:
        _, session = self.find_market(market_id)
        trades = [t.to_dict() for t in session.trades if t.tick >= since]
        return {"market_id": market_id, "tick": session.tick, "trades": trades}

    def export_event(self, event_id: str) -> dict:
        event = self._event(event_id)
        data = self.event_summary(event, admin=True)
        data["payouts"] = [p.to_dict() for p in event.payouts]
        if event.sessions:
            data["books"] = {
                mid: {
                    name: {
                        "cash": lmsr.quantize_money(book.cash),
                        "yes": book.yes,
                        "no": book.no,
                        "trades": book.trades,
                    }
                    for name, book in sorted(session.human_books.items())
                }
                for mid, session in event.sessions.items()
            }
            data["trades"] = {
                mid: [t.to_dict() for t in session.trades]
                for mid, session in event.sessions.items()
            }
        return data

    def accounting(self, event_id: str) -> dict:
        """Exact cash conservation check: trader deltas plus the maker's
        net take must cancel."""
        event = self._event(event_id)
        human_delta = 0.0
        agent_delta = 0.0
        maker_net = 0.0
        for session in event.sessions.values():
            for book in session.human_books.values():
                human_delta += book.cash - session.human_cash0
            agent_delta += float(session.agent_pnl().sum())
            market = session.market
            collected = lmsr.cost(market.q_yes, market.q_no, market.b) - lmsr.cost(
                0.0, 0.0, market.b
            )
            redeemed = 0.0
            if market.status == lmsr.SETTLED and market.winner is not None:
                q_win = market.q_yes if market.winner == lmsr.YES else market.q_no
                redeemed = q_win
            maker_net += collected - redeemed
        residual = human_delta + agent_delta + maker_net
        return {
            "event_id": event_id,
            "human_delta": human_delta,
            "agent_delta": agent_delta,
            "maker_net": maker_net,
            "residual": residual,
        }

    # ---------------------------------------------------------------- #
    # recovery

    @classmethod
    def recover(
        cls,
        journal_path,
        *,
        admin_token: str = "admin",
        populations: dict[str, Population] | None = None,
        resume: bool = False,
    ) -> tuple["MarketService", RecoveryReport]:
        """Rebuild a service from its journal. Replay halts at the first
        corrupt or unverifiable record; with resume=True the corrupt tail
        is truncated and the journal reattached for further appends."""
        records, corruption = journal_mod.scan(journal_path)
        service = cls(admin_token=admin_token)
        replayer = journal_mod.MarketReplayer()
        applied = 0
        halt: tuple[int, str] | None = None
        for lineno, record in records:
            kind = record["type"]
            try:
                if kind in journal_mod.MARKET_RECORD_TYPES:
                    replayer.apply(record)
                elif kind in SERVICE_RECORD_TYPES:
                    service._apply_service_record(record, populations or {})
                else:
                    raise JournalError(f"unknown record type {kind!r}")
            except (JournalError, DataError, MarketError, KeyError, TypeError, ValueError) as exc:
                reason = str(exc.args[0]) if exc.args else repr(exc)
                halt = (lineno, reason)
                break
            applied += 1
        if halt is None and corruption is not None:
            halt = corruption
        for event in service.events.values():
            for market_id, session in event.sessions.items():
                state = replayer.markets.get(market_id)
                if state is not None:
                    _inject_market_state(session, state)
        report = RecoveryReport(
            records_applied=applied,
            corrupt_line=halt[0] if halt else None,
            corrupt_reason=halt[1] if halt else "",
            events=sorted(service.events),
        )
        if halt is not None:
            logger.warning(
                "journal %s recovery halted at line %d: %s",
                journal_path,
                halt[0],
                halt[1],
            )
        if resume:
            if halt is not None:
                journal_mod.truncate_to(journal_path, halt[0] - 1)
                report.truncated = True
            service.journal = journal_mod.Journal(journal_path)
            for event in service.events.values():
                for session in event.sessions.values():
                    session.journal = service.journal
        return service, report

    def _apply_service_record(self, record: dict, populations) -> None:
        kind = record["type"]
        if kind == "event_create":
            config = EventConfig(**record["config"])
            claims = [_claim_from_dict(c) for c in record["claims"]]
            population = populations.get(config.event_id)
            if config.mode == sim.HYBRID and population is None:
                raise JournalError(
                    f"hybrid event {config.event_id!r} needs its population "
                    "passed to recover()"
                )
            event = Event(
                config, claims, dict(record["participants"]), population=population
            )
            self.events[config.event_id] = event
        elif kind == "event_open":
            event = self._event(record["event_id"])
            event.money_market_id = record["money_market_id"]
            self._open_sessions(event, journal=None)
            event.status = OPEN
        elif kind == "event_close":
            event = self._event(record["event_id"])
            event.status = record["status"]
            outcomes = record.get("outcomes")
            event.outcomes = dict(outcomes) if outcomes else None
        elif kind == "payout":
            event = self._event(record["event_id"])
            event.payouts.append(
                PayoutRecord(
                    participant=record["participant"],
                    trades=int(record["trades"]),
                    eligible=bool(record["eligible"]),
                    market_cash=float(record["market_cash"]),
                    show_up=float(record["show_up"]),
                    total=float(record["total"]),
                )
            )


def _claim_dict(claim: ClaimRecord) -> dict:
    return {
        "claim_id": claim.claim_id,
        "domain": claim.domain,
        "features": [float(v) for v in claim.features],
        "outcome": claim.outcome,
    }


def _claim_from_dict(data: dict) -> ClaimRecord:
    return ClaimRecord(
        claim_id=data["claim_id"],
        domain=data["domain"],
        features=np.asarray(data["features"], dtype=np.float64),
        outcome=data.get("outcome"),
    )


def _inject_market_state(session: sim.MarketSession, state) -> None:
    """Overwrite a fresh session with journal-replayed state. Exactness
    holds because the replayer applies the same float operations in the
    same order the simulation did."""
    market = session.market
    market.q_yes = state.q_yes
    market.q_no = state.q_no
    market.trade_count = state.trade_count
    market.status = state.status
    market.winner = state.winner
    session.winner = state.winner
    session._closing_price = state.closing_price
    session.tick = state.last_tick + 1
    session.agent_trade_total = state.agent_trades
    session.skipped = list(state.skipped)
    for name, human in state.humans.items():
        session.human_books[name] = sim.HumanBook(
            cash=human.cash, yes=human.yes, no=human.no, trades=human.trades
        )
    if session.n_agents and state.agents:
        index_of = {str(int(uid)): i for i, uid in enumerate(session.uids)}
        for uid, agent in state.agents.items():
            i = index_of.get(uid)
            if i is None:
                raise JournalError(
                    f"journal names agent {uid} absent from the population"
                )
            session.agent_cash[i] = agent.cash
            session.agent_holdings[i] = agent.yes + agent.no
            session.agent_trade_counts[i] = agent.trades


# -------------------------------------------------------------------- #
# HTTP layer


def create_app(service: MarketService):
    """FastAPI app over a MarketService. Participant routes authenticate
    with X-Token (or Bearer) headers; admin routes with X-Admin-Token."""
    from fastapi import Body, FastAPI, Header, HTTPException, Query
    from fastapi.responses import StreamingResponse

    app = FastAPI(title="repmarket service", docs_url=None, redoc_url=None)

    def _participant(x_token: str | None, authorization: str | None):
        token = x_token
        if token is None and authorization and authorization.startswith("Bearer "):
            token = authorization[len("Bearer ") :]
        if token is None:
            raise HTTPException(status_code=401, detail="missing token")
        try:
            return service.login(token)
        except MarketError:
            raise HTTPException(status_code=401, detail="unknown token")

    def _admin(x_admin_token: str | None):
        if x_admin_token != service.admin_token:
            raise HTTPException(status_code=403, detail="admin token required")

    def _wrap(call, *args, **kwargs):
        try:
            return call(*args, **kwargs)
        except DataError as exc:
            status = 404 if "unknown" in str(exc) else 400
            raise HTTPException(status_code=status, detail=str(exc))
        except MarketError as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    @app.post("/session/login")
    def login(body: dict = Body(...)):
        token = body.get("token")
        if not isinstance(token, str) or not token:
            raise HTTPException(status_code=422, detail="token required")
        try:
            event, name = service.login(token)
        except MarketError:
            raise HTTPException(status_code=401, detail="unknown token")
        cash = {}
        for mid in event.market_ids:
            session = event.sessions.get(mid)
            if session is None:
                cash[mid] = lmsr.quantize_money(event.config.human_cash)
            else:
                book = session.human_books.get(name)
                balance = book.cash if book else session.human_cash0
                cash[mid] = lmsr.quantize_money(balance)
        return {
            "participant": name,
            "event_id": event.event_id,
            "event_status": event.status,
            "markets": event.market_ids,
            "cash": cash,
        }

    @app.get("/events")
    def events(
        x_token: str | None = Header(default=None),
        authorization: str | None = Header(default=None),
    ):
        _participant(x_token, authorization)
        return [service.event_summary(e) for e in service.events.values()]

    @app.get("/event/{event_id}/markets")
    def event_markets(
        event_id: str,
        x_token: str | None = Header(default=None),
        authorization: str | None = Header(default=None),
    ):
        _participant(x_token, authorization)
        event = _wrap(service._event, event_id)
        if not event.sessions:
            return [{"market_id": mid, "status": SCHEDULED} for mid in event.market_ids]
        return [
            service.market_summary(event.sessions[mid]) for mid in event.market_ids
        ]

    @app.get("/market/{market_id}/snapshot")
    def market_snapshot(
        market_id: str,
        x_token: str | None = Header(default=None),
        authorization: str | None = Header(default=None),
    ):
        _, name = _participant(x_token, authorization)
        return _wrap(service.market_snapshot, market_id, name)

    @app.post("/market/{market_id}/order")
    def market_order(
        market_id: str,
        body: dict = Body(...),
        x_token: str | None = Header(default=None),
        authorization: str | None = Header(default=None),
    ):
        _, name = _participant(x_token, authorization)
        side = body.get("side")
        action = body.get("action")
        if side not in lmsr.SIDES or action not in sim.ACTIONS:
            raise HTTPException(
                status_code=422, detail="side must be yes/no, action buy/sell"
            )
        return _wrap(service.submit_order, market_id, name, side, action)

    @app.get("/market/{market_id}/trades")
    def market_trades(
        market_id: str,
        since: int = Query(default=0, ge=0),
        x_token: str | None = Header(default=None),
        authorization: str | None = Header(default=None),
    ):
        _participant(x_token, authorization)
        return _wrap(service.market_trades, market_id, since)

    @app.get("/event/{event_id}/stream")
    def stream(
        event_id: str,
        x_token: str | None = Header(default=None),
        authorization: str | None = Header(default=None),
    ):
        _, name = _participant(x_token, authorization)
        event = _wrap(service._event, event_id)
        sub = event.subscribe()

        def sse(kind: str, payload: dict) -> str:
            return f"event: {kind}\ndata: {json.dumps(payload, sort_keys=True)}\n\n"

        def generate():
            try:
                yield sse("snapshot", service.event_summary(event))
                while True:
                    try:
                        record = sub.get(timeout=1.0)
                    except queue.Empty:
                        if event.status != OPEN:
                            break
                        yield ": ping\n\n"
                        continue
                    yield sse(record.get("type", "record"), record)
                    if record.get("type") == "event_close":
                        break
            finally:
                event.unsubscribe(sub)

        return StreamingResponse(generate(), media_type="text/event-stream")

    # -------------------------- admin ------------------------------- #

    @app.post("/admin/event")
    def admin_create(
        body: dict = Body(...),
        x_admin_token: str | None = Header(default=None),
    ):
        _admin(x_admin_token)
        try:
            event = service.create_event(
                body["event_id"],
                body["claim_ids"],
                body["participants"],
                seed=int(body["seed"]),
                b=float(body.get("b", 30.0)),
                ticks=int(body.get("ticks", 43200)),
                tick_interval=float(body.get("tick_interval", 0.0)),
                mode=body.get("mode", sim.HUMAN_ONLY),
                human_cash=float(body.get("human_cash", DEFAULT_HUMAN_CASH)),
                lam=float(body.get("lam", 0.25)),
                margin=float(body.get("margin", 0.02)),
                agent_cash=float(body.get("agent_cash", 500.0)),
            )
        except KeyError as exc:
            raise HTTPException(status_code=422, detail=f"missing field {exc}")
        except (DataError, MarketError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {
            "event_id": event.event_id,
            "status": event.status,
            "markets": event.market_ids,
            "tokens": dict(event.participants),
        }

    @app.post("/admin/event/{event_id}/open")
    def admin_open(
        event_id: str, x_admin_token: str | None = Header(default=None)
    ):
        _admin(x_admin_token)
        event = _wrap(service.open_event, event_id)
        return service.event_summary(event, admin=True)

    @app.post("/admin/event/{event_id}/step")
    def admin_step(
        event_id: str,
        body: dict = Body(default={}),
        x_admin_token: str | None = Header(default=None),
    ):
        _admin(x_admin_token)
        ticks = int(body.get("ticks", 1))
        tick = _wrap(service.step_event, event_id, ticks)
        return {"event_id": event_id, "tick": tick}

    @app.post("/admin/event/{event_id}/close")
    def admin_close(
        event_id: str,
        body: dict = Body(default={}),
        x_admin_token: str | None = Header(default=None),
    ):
        _admin(x_admin_token)
        outcomes = body.get("outcomes")
        payouts = _wrap(service.close_event, event_id, outcomes)
        return {
            "event_id": event_id,
            "status": service._event(event_id).status,
            "payouts": [p.to_dict() for p in payouts],
        }

    @app.get("/admin/event/{event_id}/payouts")
    def admin_payouts(
        event_id: str, x_admin_token: str | None = Header(default=None)
    ):
        _admin(x_admin_token)
        event = _wrap(service._event, event_id)
        if event.status not in (CLOSED, SETTLED):
            raise HTTPException(status_code=409, detail="event is not closed")
        return {
            "event_id": event_id,
            "money_market_id": event.money_market_id,
            "payouts": [p.to_dict() for p in event.payouts],
        }

    @app.get("/admin/event/{event_id}/export")
    def admin_export(
        event_id: str, x_admin_token: str | None = Header(default=None)
    ):
        _admin(x_admin_token)
        return _wrap(service.export_event, event_id)

    return app


def run_app(service: MarketService, host: str = "127.0.0.1", port: int = 8000):
    """Blocking uvicorn server around create_app(service)."""
    import uvicorn

    uvicorn.run(create_app(service), host=host, port=port, log_level="warning")
