"""Trading service: event lifecycle, payouts, accounting closure,
journal recovery, and the HTTP layer including the SSE stream."""

import json
import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from repmarket import lmsr, sim
from repmarket._rng import derive_seed, uniform
from repmarket.agents import Agent, AgentGenome, Population
from repmarket.errors import DataError, JournalError, MarketError
from repmarket.journal import scan
from repmarket.service import (
    CLOSED,
    ELIGIBLE_TRADES,
    EVENT_MARKETS,
    OPEN,
    SCHEDULED,
    SETTLED,
    SHOW_UP_FEE,
    MarketService,
    create_app,
)

CLAIM_IDS = ["R00", "R01", "R02", "R03", "N00"]
OUTCOMES = {"R00": "R", "R01": "R", "R02": "R", "R03": "R", "N00": "NR"}
TOKENS = {"alice": "tok-alice", "bob": "tok-bob"}
ADMIN = "hunter2"


def make_service(catalog, journal_path=None):
    return MarketService(catalog, journal_path=journal_path, admin_token=ADMIN)


def make_event(service, event_id="ev1", *, seed=7, ticks=200, **kw):
    kw.setdefault("tokens", TOKENS)
    return service.create_event(
        event_id, CLAIM_IDS, ["alice", "bob"], seed=seed, ticks=ticks, **kw
    )


def tracker_population(catalog, *, reservation=0.9):
    # one agent centered on a real claim so hybrid sessions produce trades
    genome = AgentGenome(
        center=catalog.get("R00").features.copy(),
        side=lmsr.YES,
        base_radius=5.0,
        reservation=reservation,
        sensitivity=0.1,
    )
    return Population(agents=[Agent(uid=0, genome=genome)], seed=0, next_uid=1)


class TestEventCreation:
    def test_requires_exactly_five_claims(self, toy_claims):
        service = make_service(toy_claims)
        with pytest.raises(DataError, match="exactly 5"):
            service.create_event(
                "ev1", CLAIM_IDS[:4], ["alice"], seed=1, tokens={"alice": "t"}
            )

    def test_rejects_duplicate_claims(self, toy_claims):
        service = make_service(toy_claims)
        with pytest.raises(DataError, match="distinct"):
            service.create_event(
                "ev1", ["R00"] * 5, ["alice"], seed=1, tokens={"alice": "t"}
            )

    def test_rejects_duplicate_event_id(self, toy_claims):
        service = make_service(toy_claims)
        make_event(service)
        with pytest.raises(DataError, match="already exists"):
            make_event(service)

    def test_rejects_unknown_claim(self, toy_claims):
        service = make_service(toy_claims)
        with pytest.raises(DataError, match="zzzz"):
            service.create_event(
                "ev1",
                ["R00", "R01", "R02", "R03", "zzzz"],
                ["alice"],
                seed=1,
                tokens={"alice": "t"},
            )

    def test_hybrid_needs_population(self, toy_claims):
        service = make_service(toy_claims)
        with pytest.raises(DataError, match="population"):
            make_event(service, mode=sim.HYBRID)

    def test_rejects_unknown_mode(self, toy_claims):
        service = make_service(toy_claims)
        with pytest.raises(DataError, match="mode"):
            make_event(service, mode="telepathic")

    def test_rejects_duplicate_participants(self, toy_claims):
        service = make_service(toy_claims)
        with pytest.raises(DataError, match="distinct"):
            service.create_event(
                "ev1", CLAIM_IDS, ["alice", "alice"], seed=1, tokens={"alice": "t"}
            )

    def test_tokens_must_cover_every_participant(self, toy_claims):
        service = make_service(toy_claims)
        with pytest.raises(DataError, match="bob"):
            make_event(service, tokens={"alice": "t"})

    def test_generated_tokens_are_distinct_and_complete(self, toy_claims):
        service = make_service(toy_claims)
        event = make_event(service, tokens=None)
        assert set(event.participants) == {"alice", "bob"}
        assert len(set(event.participants.values())) == 2

    def test_human_only_event_carries_no_population(self, toy_claims):
        pop = tracker_population(toy_claims)
        service = MarketService(toy_claims, admin_token=ADMIN, population=pop)
        event = make_event(service)
        assert event.population is None


class TestLifecycle:
    def test_money_market_draw_is_deterministic_and_in_range(self, toy_claims):
        ids = set()
        for _ in range(2):
            service = make_service(toy_claims)
            event = make_event(service, seed=7)
            service.open_event("ev1")
            assert event.money_market_id in event.market_ids
            ids.add(event.money_market_id)
        assert len(ids) == 1
        draw = uniform(derive_seed(7, "money-market", "ev1"), 0, 0)
        expected = f"ev1:{CLAIM_IDS[int(draw * EVENT_MARKETS)]}"
        assert ids.pop() == expected

    def test_open_twice_is_an_error(self, toy_claims):
        service = make_service(toy_claims)
        make_event(service)
        service.open_event("ev1")
        with pytest.raises(MarketError, match="not openable"):
            service.open_event("ev1")

    def test_order_requires_open_event(self, toy_claims):
        service = make_service(toy_claims)
        event = make_event(service)
        with pytest.raises(DataError, match="unknown market"):
            service.submit_order(event.market_ids[0], "alice", "yes", "buy")

    def test_step_advances_every_market(self, toy_claims):
        service = make_service(toy_claims)
        event = make_event(service)
        service.open_event("ev1")
        assert service.step_event("ev1", 3) == 3
        assert all(s.tick == 3 for s in event.sessions.values())

    def test_step_rejects_nonpositive_ticks(self, toy_claims):
        service = make_service(toy_claims)
        make_event(service)
        service.open_event("ev1")
        with pytest.raises(DataError, match=">= 1"):
            service.step_event("ev1", 0)

    def test_step_stops_at_the_tick_budget(self, toy_claims):
        service = make_service(toy_claims)
        event = make_event(service, ticks=5)
        service.open_event("ev1")
        assert service.step_event("ev1", 99) == 5
        assert event.tick == 5

    def test_close_without_outcomes_leaves_event_closed(self, toy_claims):
        service = make_service(toy_claims)
        event = make_event(service)
        service.open_event("ev1")
        service.close_event("ev1")
        assert event.status == CLOSED
        assert event.outcomes is None

    def test_close_with_outcomes_settles(self, toy_claims):
        service = make_service(toy_claims)
        event = make_event(service)
        service.open_event("ev1")
        service.close_event("ev1", OUTCOMES)
        assert event.status == SETTLED
        assert event.outcomes == OUTCOMES
        assert all(s.market.winner is not None for s in event.sessions.values())

    def test_close_twice_is_an_error(self, toy_claims):
        service = make_service(toy_claims)
        make_event(service)
        service.open_event("ev1")
        service.close_event("ev1", OUTCOMES)
        with pytest.raises(MarketError, match="not open"):
            service.close_event("ev1")

    @pytest.mark.parametrize(
        "outcomes, message",
        [
            ({**OUTCOMES, "zzzz": "R"}, "unknown claims"),
            ({k: v for k, v in OUTCOMES.items() if k != "N00"}, "missing"),
            ({**OUTCOMES, "N00": "maybe"}, "R or NR"),
        ],
    )
    def test_bad_outcomes_are_rejected_and_event_stays_open(
        self, toy_claims, outcomes, message
    ):
        service = make_service(toy_claims)
        event = make_event(service)
        service.open_event("ev1")
        with pytest.raises(DataError, match=message):
            service.close_event("ev1", outcomes)
        assert event.status == OPEN

    def test_unknown_event_lookups(self, toy_claims):
        service = make_service(toy_claims)
        with pytest.raises(DataError, match="unknown event"):
            service.step_event("nope")
        with pytest.raises(DataError, match="unknown market"):
            service.find_market("nope:m")
        with pytest.raises(MarketError, match="unknown token"):
            service.login("nope")


def run_small_event(service, *, trades=("alice", "alice", "alice", "bob", "bob")):
    """Create+open ev1, queue one buy per name in market order, step, close."""
    event = make_event(service)
    service.open_event("ev1")
    for mid, name in zip(event.market_ids, trades):
        service.submit_order(mid, name, "yes", "buy")
    service.step_event("ev1", 1)
    service.close_event("ev1", OUTCOMES)
    return event


class TestPayouts:
    def test_eligibility_boundary_three_vs_two_trades(self, toy_claims):
        service = make_service(toy_claims)
        event = run_small_event(service)
        by_name = {p.participant: p for p in event.payouts}
        alice, bob = by_name["alice"], by_name["bob"]
        assert alice.trades == ELIGIBLE_TRADES and alice.eligible
        assert bob.trades == 2 and not bob.eligible
        assert bob.market_cash == 0.0
        assert bob.total == SHOW_UP_FEE

    def test_eligible_payout_is_money_market_cash_plus_fee(self, toy_claims):
        service = make_service(toy_claims)
        event = run_small_event(service, trades=("alice",) * 5)
        money = event.sessions[event.money_market_id]
        cash = money.human_books["alice"].cash
        record = next(p for p in event.payouts if p.participant == "alice")
        assert record.market_cash == lmsr.quantize_money(cash)
        assert record.total == lmsr.quantize_money(record.market_cash + SHOW_UP_FEE)
        assert record.show_up == SHOW_UP_FEE

    def test_untouched_money_market_pays_starting_cash(self, toy_claims):
        service = make_service(toy_claims)
        event = make_event(service)
        service.open_event("ev1")
        # alice trades three times but only outside the money market
        others = [m for m in event.market_ids if m != event.money_market_id][:3]
        for mid in others:
            service.submit_order(mid, "alice", "yes", "buy")
        service.step_event("ev1", 1)
        service.close_event("ev1", OUTCOMES)
        record = next(p for p in event.payouts if p.participant == "alice")
        assert record.eligible
        assert record.market_cash == 25.0
        assert record.total == 65.0

    def test_rejected_orders_do_not_count_as_trades(self, toy_claims):
        service = make_service(toy_claims)
        event = make_event(service)
        service.open_event("ev1")
        for mid in event.market_ids[:3]:
            service.submit_order(mid, "bob", "yes", "sell")
        service.step_event("ev1", 1)
        service.close_event("ev1", OUTCOMES)
        record = next(p for p in event.payouts if p.participant == "bob")
        assert record.trades == 0
        assert not record.eligible

    def test_accounting_residual_vanishes_after_settlement(self, toy_claims):
        pop = tracker_population(toy_claims)
        service = make_service(toy_claims)
        event = make_event(service, mode=sim.HYBRID, population=pop, lam=1.0)
        service.open_event("ev1")
        for mid in event.market_ids:
            service.submit_order(mid, "alice", "yes", "buy")
            service.submit_order(mid, "bob", "no", "buy")
        service.step_event("ev1", 50)
        service.close_event("ev1", OUTCOMES)
        report = service.accounting("ev1")
        assert abs(report["residual"]) <= 1e-9
        assert report["maker_net"] == pytest.approx(
            -(report["human_delta"] + report["agent_delta"]), abs=1e-9
        )

    def test_secrecy_summary_hides_money_market_until_close(self, toy_claims):
        service = make_service(toy_claims)
        event = make_event(service)
        service.open_event("ev1")
        for admin in (False, True):
            summary = service.event_summary(event, admin=admin)
            assert "money_market_id" not in summary
            assert "outcomes" not in summary
        service.close_event("ev1", OUTCOMES)
        summary = service.event_summary(event)
        assert summary["money_market_id"] == event.money_market_id
        assert summary["outcomes"] == OUTCOMES


class TestRecovery:
    def test_recover_reproduces_live_state(self, toy_claims, tmp_path):
        path = tmp_path / "service.jsonl"
        service = make_service(toy_claims, journal_path=path)
        event = run_small_event(service)
        service.shutdown()

        recovered, report = MarketService.recover(path, admin_token=ADMIN)
        assert report.ok and report.events == ["ev1"]
        twin = recovered.events["ev1"]
        assert twin.status == event.status == SETTLED
        assert twin.money_market_id == event.money_market_id
        assert twin.outcomes == event.outcomes
        assert [p.to_dict() for p in twin.payouts] == [
            p.to_dict() for p in event.payouts
        ]
        for mid in event.market_ids:
            a, b = event.sessions[mid], twin.sessions[mid]
            assert b.market.q_yes == a.market.q_yes
            assert b.market.q_no == a.market.q_no
            assert b.market.trade_count == a.market.trade_count
            assert b.market.status == a.market.status
            assert b.market.winner == a.market.winner
            for name, book in a.human_books.items():
                other = b.human_books[name]
                assert other.cash == book.cash
                assert (other.yes, other.no, other.trades) == (
                    book.yes,
                    book.no,
                    book.trades,
                )

    def test_recover_open_event_can_keep_trading(self, toy_claims, tmp_path):
        path = tmp_path / "service.jsonl"
        service = make_service(toy_claims, journal_path=path)
        event = make_event(service)
        service.open_event("ev1")
        service.submit_order(event.market_ids[0], "alice", "yes", "buy")
        service.step_event("ev1", 1)
        service.shutdown()

        recovered, report = MarketService.recover(
            path, admin_token=ADMIN, resume=True
        )
        assert report.ok and not report.truncated
        twin = recovered.events["ev1"]
        assert twin.status == OPEN
        assert twin.sessions[event.market_ids[0]].market.trade_count == 1
        recovered.submit_order(event.market_ids[0], "alice", "yes", "buy")
        recovered.step_event("ev1", 1)
        recovered.close_event("ev1", OUTCOMES)
        recovered.shutdown()
        records, corruption = scan(path)
        assert corruption is None
        kinds = [rec["type"] for _, rec in records]
        assert kinds.count("event_close") == 1
        assert kinds.count("payout") == 2

    def test_recover_hybrid_needs_population_mapping(self, toy_claims, tmp_path):
        path = tmp_path / "service.jsonl"
        pop = tracker_population(toy_claims)
        service = make_service(toy_claims, journal_path=path)
        make_event(service, mode=sim.HYBRID, population=pop, lam=1.0)
        service.open_event("ev1")
        service.step_event("ev1", 3)
        service.shutdown()

        _, report = MarketService.recover(path, admin_token=ADMIN)
        assert not report.ok
        assert "population" in report.corrupt_reason

        recovered, report = MarketService.recover(
            path, admin_token=ADMIN, populations={"ev1": pop}
        )
        assert report.ok
        twin = recovered.events["ev1"]
        assert twin.sessions[twin.market_ids[0]].market.trade_count > 0

    def test_recover_resume_truncates_corrupt_tail(self, toy_claims, tmp_path):
        path = tmp_path / "service.jsonl"
        service = make_service(toy_claims, journal_path=path)
        make_event(service)
        service.open_event("ev1")
        service.shutdown()
        good_lines = path.read_text().count("\n")
        with path.open("a") as fh:
            fh.write('{"type": "event_open", "event_id"\n')

        recovered, report = MarketService.recover(
            path, admin_token=ADMIN, resume=True
        )
        assert report.truncated
        assert report.corrupt_line == good_lines + 1
        assert path.read_text().count("\n") == good_lines
        assert recovered.events["ev1"].status == OPEN
        recovered.shutdown()

    def test_recover_missing_journal_raises(self, tmp_path):
        with pytest.raises(JournalError, match="cannot read journal"):
            MarketService.recover(tmp_path / "absent.jsonl")


def deep_keys(payload):
    """Every dict key reachable anywhere inside a JSON payload."""
    keys = set()
    stack = [payload]
    while stack:
        node = stack.pop()
        if isinstance(node, dict):
            keys.update(node)
            stack.extend(node.values())
        elif isinstance(node, list):
            stack.extend(node)
    return keys


@pytest.fixture()
def web(toy_claims, tmp_path):
    service = make_service(toy_claims, journal_path=tmp_path / "web.jsonl")
    event = make_event(service, seed=11, ticks=500)
    service.open_event("ev1")
    client = TestClient(create_app(service))
    yield client, service, event
    service.shutdown()


ALICE = {"X-Token": "tok-alice"}
BOB = {"X-Token": "tok-bob"}
ADMIN_H = {"X-Admin-Token": ADMIN}


class TestHttp:
    def test_login_lists_five_markets_with_starting_cash(self, web):
        client, _, event = web
        resp = client.post("/session/login", json={"token": "tok-alice"})
        assert resp.status_code == 200
        body = resp.json()
        assert body["participant"] == "alice"
        assert body["event_status"] == OPEN
        assert body["markets"] == event.market_ids
        assert len(body["cash"]) == 5
        assert all(v == 25.0 for v in body["cash"].values())

    def test_login_unknown_token_is_401(self, web):
        client, _, _ = web
        assert (
            client.post("/session/login", json={"token": "wrong"}).status_code == 401
        )

    def test_login_missing_token_is_422(self, web):
        client, _, _ = web
        assert client.post("/session/login", json={}).status_code == 422

    def test_reads_require_a_participant_token(self, web):
        client, _, event = web
        assert client.get("/events").status_code == 401
        assert (
            client.get(
                f"/market/{event.market_ids[0]}/snapshot",
                headers={"X-Token": "wrong"},
            ).status_code
            == 401
        )

    def test_bearer_header_is_accepted(self, web):
        client, _, _ = web
        resp = client.get("/events", headers={"Authorization": "Bearer tok-alice"})
        assert resp.status_code == 200
        assert resp.json()[0]["event_id"] == "ev1"

    def test_fresh_snapshot(self, web):
        client, _, event = web
        resp = client.get(
            f"/market/{event.market_ids[0]}/snapshot", headers=ALICE
        )
        assert resp.status_code == 200
        snap = resp.json()
        assert snap["price"] == 0.5
        assert snap["cash"] == 25.0
        assert snap["holdings"] == {"yes": 0, "no": 0}
        assert "q_yes" not in snap and "q_no" not in snap

    def test_buy_moves_price_up_and_cash_down(self, web):
        client, _, event = web
        mid = event.market_ids[0]
        resp = client.post(
            f"/market/{mid}/order",
            json={"side": "yes", "action": "buy"},
            headers=ALICE,
        )
        assert resp.status_code == 200
        assert resp.json()["position"] == 0
        assert client.post(
            "/admin/event/ev1/step", json={"ticks": 1}, headers=ADMIN_H
        ).status_code == 200
        snap = client.get(f"/market/{mid}/snapshot", headers=ALICE).json()
        assert snap["price"] > 0.5
        assert snap["cash"] < 25.0
        assert snap["holdings"]["yes"] == 1
        trades = client.get(f"/market/{mid}/trades", headers=ALICE).json()
        assert len(trades["trades"]) == 1
        assert trades["trades"][0]["trader"] == "alice"

    def test_orders_fill_in_arrival_order(self, web):
        client, _, event = web
        mid = event.market_ids[1]
        for headers, expected in ((ALICE, 0), (BOB, 1)):
            resp = client.post(
                f"/market/{mid}/order",
                json={"side": "yes", "action": "buy"},
                headers=headers,
            )
            assert resp.json()["position"] == expected
        client.post("/admin/event/ev1/step", json={}, headers=ADMIN_H)
        trades = client.get(f"/market/{mid}/trades", headers=ALICE).json()["trades"]
        assert [t["trader"] for t in trades] == ["alice", "bob"]

    def test_sell_without_holdings_executes_nothing(self, web):
        client, _, event = web
        mid = event.market_ids[2]
        client.post(
            f"/market/{mid}/order",
            json={"side": "yes", "action": "sell"},
            headers=BOB,
        )
        client.post("/admin/event/ev1/step", json={}, headers=ADMIN_H)
        snap = client.get(f"/market/{mid}/snapshot", headers=BOB).json()
        assert snap["price"] == 0.5
        assert snap["cash"] == 25.0
        assert snap["trades"] == 0
        trades = client.get(f"/market/{mid}/trades", headers=BOB).json()
        assert trades["trades"] == []

    def test_invalid_order_body_is_422(self, web):
        client, _, event = web
        mid = event.market_ids[0]
        for body in ({"side": "up", "action": "buy"}, {"side": "yes"}):
            resp = client.post(f"/market/{mid}/order", json=body, headers=ALICE)
            assert resp.status_code == 422

    def test_unknown_market_is_404(self, web):
        client, _, _ = web
        resp = client.get("/market/ev1:nope/snapshot", headers=ALICE)
        assert resp.status_code == 404

    def test_trades_since_filter(self, web):
        client, _, event = web
        mid = event.market_ids[3]
        client.post(
            f"/market/{mid}/order",
            json={"side": "no", "action": "buy"},
            headers=ALICE,
        )
        client.post("/admin/event/ev1/step", json={}, headers=ADMIN_H)
        client.post(
            f"/market/{mid}/order",
            json={"side": "no", "action": "buy"},
            headers=ALICE,
        )
        client.post("/admin/event/ev1/step", json={}, headers=ADMIN_H)
        url = f"/market/{mid}/trades"
        assert len(client.get(url, headers=ALICE).json()["trades"]) == 2
        late = client.get(url, params={"since": 1}, headers=ALICE).json()
        assert len(late["trades"]) == 1
        assert late["trades"][0]["tick"] == 1

    def test_admin_routes_reject_bad_admin_token(self, web):
        client, _, _ = web
        for headers in ({}, {"X-Admin-Token": "wrong"}):
            resp = client.post(
                "/admin/event/ev1/step", json={}, headers=headers
            )
            assert resp.status_code == 403

    def test_admin_create_open_close_round_trip(self, web):
        client, _, _ = web
        resp = client.post(
            "/admin/event",
            json={
                "event_id": "ev2",
                "claim_ids": ["N01", "N02", "N03", "N04", "R09"],
                "participants": ["carol"],
                "seed": 3,
                "ticks": 10,
            },
            headers=ADMIN_H,
        )
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == SCHEDULED
        assert list(body["tokens"]) == ["carol"]
        assert client.post(
            "/admin/event/ev2/open", headers=ADMIN_H
        ).status_code == 200
        outcomes = {"N01": "NR", "N02": "NR", "N03": "NR", "N04": "NR", "R09": "R"}
        resp = client.post(
            "/admin/event/ev2/close", json={"outcomes": outcomes}, headers=ADMIN_H
        )
        assert resp.status_code == 200
        assert resp.json()["status"] == SETTLED

    def test_admin_create_missing_field_is_422(self, web):
        client, _, _ = web
        resp = client.post(
            "/admin/event", json={"event_id": "ev3"}, headers=ADMIN_H
        )
        assert resp.status_code == 422

    def test_payouts_conflict_before_close(self, web):
        client, _, _ = web
        assert (
            client.get("/admin/event/ev1/payouts", headers=ADMIN_H).status_code
            == 409
        )

    def test_close_disables_trading(self, web):
        client, _, event = web
        client.post(
            "/admin/event/ev1/close", json={"outcomes": OUTCOMES}, headers=ADMIN_H
        )
        resp = client.post(
            f"/market/{event.market_ids[0]}/order",
            json={"side": "yes", "action": "buy"},
            headers=ALICE,
        )
        assert resp.status_code == 409
        summary = client.get("/events", headers=ALICE).json()[0]
        assert summary["status"] == SETTLED
        assert summary["outcomes"] == OUTCOMES

    def test_double_close_conflicts(self, web):
        client, _, _ = web
        client.post("/admin/event/ev1/close", json={}, headers=ADMIN_H)
        resp = client.post("/admin/event/ev1/close", json={}, headers=ADMIN_H)
        assert resp.status_code == 409

    def test_money_market_hidden_until_close_across_every_read(self, web):
        client, _, event = web
        client.post(
            f"/market/{event.market_ids[0]}/order",
            json={"side": "yes", "action": "buy"},
            headers=ALICE,
        )
        client.post("/admin/event/ev1/step", json={}, headers=ADMIN_H)
        reads = [
            client.post("/session/login", json={"token": "tok-alice"}),
            client.get("/events", headers=ALICE),
            client.get("/event/ev1/markets", headers=ALICE),
            client.get("/admin/event/ev1/export", headers=ADMIN_H),
        ]
        for mid in event.market_ids:
            reads.append(client.get(f"/market/{mid}/snapshot", headers=ALICE))
            reads.append(client.get(f"/market/{mid}/trades", headers=ALICE))
        for resp in reads:
            assert resp.status_code == 200
            assert "money_market_id" not in deep_keys(resp.json())
        client.post(
            "/admin/event/ev1/close", json={"outcomes": OUTCOMES}, headers=ADMIN_H
        )
        payouts = client.get("/admin/event/ev1/payouts", headers=ADMIN_H).json()
        assert payouts["money_market_id"] == event.money_market_id
        export = client.get("/admin/event/ev1/export", headers=ADMIN_H).json()
        assert export["money_market_id"] == event.money_market_id

    def test_export_reports_books_and_payouts(self, web):
        client, _, event = web
        mid = event.market_ids[0]
        for _ in range(3):
            client.post(
                f"/market/{mid}/order",
                json={"side": "yes", "action": "buy"},
                headers=ALICE,
            )
            client.post("/admin/event/ev1/step", json={}, headers=ADMIN_H)
        client.post(
            "/admin/event/ev1/close", json={"outcomes": OUTCOMES}, headers=ADMIN_H
        )
        export = client.get("/admin/event/ev1/export", headers=ADMIN_H).json()
        book = export["books"][mid]["alice"]
        assert book["yes"] == 3 and book["trades"] == 3
        assert book["cash"] == round(book["cash"], 4)
        assert len(export["trades"][mid]) == 3
        assert {p["participant"] for p in export["payouts"]} == {"alice", "bob"}

    def test_scheduled_event_lists_placeholder_markets(self, toy_claims):
        service = make_service(toy_claims)
        make_event(service)
        client = TestClient(create_app(service))
        rows = client.get("/event/ev1/markets", headers=ALICE).json()
        assert all(row["status"] == SCHEDULED for row in rows)
        assert client.get("/events", headers=ALICE).json()[0]["status"] == SCHEDULED


class TestHybridOverHttp:
    def test_agent_trades_precede_human_trades_each_tick(self, toy_claims):
        pop = tracker_population(toy_claims)
        service = make_service(toy_claims)
        make_event(service, mode=sim.HYBRID, population=pop, lam=1.0)
        event = service.events["ev1"]
        service.open_event("ev1")
        client = TestClient(create_app(service))
        mid = event.market_id("R00")
        client.post(
            f"/market/{mid}/order",
            json={"side": "yes", "action": "buy"},
            headers=ALICE,
        )
        client.post("/admin/event/ev1/step", json={}, headers=ADMIN_H)
        trades = client.get(f"/market/{mid}/trades", headers=ALICE).json()["trades"]
        assert [t["kind"] for t in trades] == ["agent", "human"]
        assert trades[0]["tick"] == trades[1]["tick"] == 0
        service.shutdown()

    def test_human_only_event_never_trades_agents(self, web):
        client, service, event = web
        client.post("/admin/event/ev1/step", json={"ticks": 20}, headers=ADMIN_H)
        for mid in event.market_ids:
            trades = client.get(f"/market/{mid}/trades", headers=ALICE).json()
            assert trades["trades"] == []
        assert all(s.n_agents == 0 for s in event.sessions.values())


def read_sse(lines, *, stop_kind, collected, max_lines=400):
    kind = None
    for i, line in enumerate(lines):
        if i >= max_lines:
            raise AssertionError(f"no {stop_kind!r} frame within {max_lines} lines")
        if line.startswith("event: "):
            kind = line[len("event: ") :]
        elif line.startswith("data: ") and kind is not None:
            collected.append((kind, json.loads(line[len("data: ") :])))
            if kind == stop_kind:
                return
            kind = None


class TestStream:
    def test_stream_snapshot_trades_and_close(self, web):
        client, service, event = web
        mid = event.market_ids[0]
        mutator = TestClient(create_app(service))
        seen = []
        ready = threading.Event()

        def drive():
            ready.wait(timeout=5.0)
            mutator.post(
                f"/market/{mid}/order",
                json={"side": "yes", "action": "buy"},
                headers=ALICE,
            )
            mutator.post("/admin/event/ev1/step", json={}, headers=ADMIN_H)
            mutator.post(
                "/admin/event/ev1/close",
                json={"outcomes": OUTCOMES},
                headers=ADMIN_H,
            )

        thread = threading.Thread(target=drive)
        thread.start()
        try:
            with client.stream("GET", "/event/ev1/stream", headers=ALICE) as resp:
                assert resp.status_code == 200
                assert resp.headers["content-type"].startswith("text/event-stream")
                lines = resp.iter_lines()
                read_sse(lines, stop_kind="snapshot", collected=seen)
                ready.set()
                read_sse(lines, stop_kind="event_close", collected=seen)
        finally:
            ready.set()
            thread.join(timeout=10.0)
        kinds = [k for k, _ in seen]
        assert kinds[0] == "snapshot"
        assert "trade" in kinds
        assert kinds[-1] == "event_close"
        snapshot = seen[0][1]
        assert snapshot["status"] == OPEN
        assert "money_market_id" not in deep_keys(snapshot)
        trade = next(body for k, body in seen if k == "trade")
        assert trade["trader"] == "alice" and trade["market_id"] == mid
        closing = seen[-1][1]
        assert closing["status"] == SETTLED
        assert closing["money_market_id"] == event.money_market_id

    def test_stream_requires_token(self, web):
        client, _, _ = web
        assert client.get("/event/ev1/stream").status_code == 401
