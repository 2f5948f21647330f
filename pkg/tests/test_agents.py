"""Geometric trading agents: bid regions, decisions, mutation, spawning."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repmarket.agents import (
    Agent,
    AgentGenome,
    MutationRates,
    Population,
    SpawnDefaults,
    decide,
    effective_radius,
    in_region,
    mutate,
    spawn_population,
)
from repmarket.errors import DataError
from repmarket.features import N_FEATURES

ORIGIN = np.zeros(N_FEATURES)


def genome(
    side="yes",
    base_radius=0.5,
    reservation=0.6,
    sensitivity=2.0,
    center=None,
) -> AgentGenome:
    return AgentGenome(
        center=ORIGIN if center is None else center,
        side=side,
        base_radius=base_radius,
        reservation=reservation,
        sensitivity=sensitivity,
    )


def point_at_distance(d: float) -> np.ndarray:
    x = np.zeros(N_FEATURES)
    x[0] = d
    return x


class TestBidRegion:
    def test_radius_full_at_or_below_reservation(self):
        g = genome()
        assert effective_radius(g, 0.6) == 0.5
        assert effective_radius(g, 0.3) == 0.5

    def test_radius_shrinks_with_price_overshoot(self):
        # overshoot 0.25 at sensitivity 2 halves the radius
        g = genome()
        assert effective_radius(g, 0.85) == pytest.approx(0.25)
        assert not in_region(g, point_at_distance(0.3), 0.85)
        assert in_region(g, point_at_distance(0.2), 0.85)

    def test_radius_floors_at_zero(self):
        g = genome(sensitivity=100.0)
        assert effective_radius(g, 0.99) == 0.0
        assert not in_region(g, point_at_distance(1e-9), 0.99)

    def test_center_always_inside_while_radius_positive(self):
        g = genome()
        assert in_region(g, ORIGIN, 0.85)

    @settings(deadline=None)
    @given(
        p_lo=st.floats(min_value=0.01, max_value=0.98),
        step=st.floats(min_value=0.0, max_value=0.5),
        sens=st.floats(min_value=0.0, max_value=10.0),
    )
    def test_radius_non_increasing_in_price(self, p_lo, step, sens):
        g = genome(sensitivity=sens)
        p_hi = min(p_lo + step, 0.99)
        assert effective_radius(g, p_hi) <= effective_radius(g, p_lo)


class TestDecide:
    def agent(self, **kw) -> Agent:
        return Agent(uid=0, genome=genome(**kw))

    def test_lambda_zero_never_trades(self):
        a = self.agent()
        for draw in (0.0, 0.5, 0.999):
            assert decide(a, ORIGIN, 0.4, 0.1, 0.0, draw) is None

    def test_undervalued_at_center_buys(self):
        # margin (0.6 - 0.4) / 0.4 = 0.5 clears delta 0.1
        order = decide(self.agent(), ORIGIN, 0.4, 0.1, 1.0, 0.0)
        assert order is not None and order.side == "yes"

    def test_thin_margin_abstains(self):
        # margin (0.6 - 0.58) / 0.58 = 0.0345 under delta 0.1
        assert decide(self.agent(), ORIGIN, 0.58, 0.1, 1.0, 0.0) is None

    def test_no_side_agent_prices_off_complement(self):
        a = self.agent(side="no")
        # p_yes 0.7 puts the NO price at 0.3, well under reservation
        order = decide(a, ORIGIN, 0.7, 0.1, 1.0, 0.0)
        assert order is not None and order.side == "no"
        assert decide(a, ORIGIN, 0.3, 0.1, 1.0, 0.0) is None

    def test_failed_participation_draw_abstains(self):
        assert decide(self.agent(), ORIGIN, 0.4, 0.1, 0.25, 0.25) is None
        assert decide(self.agent(), ORIGIN, 0.4, 0.1, 0.25, 0.2499) is not None

    def test_out_of_region_abstains(self):
        assert decide(self.agent(), point_at_distance(0.6), 0.4, 0.1, 1.0, 0.0) is None

    def test_infinite_margin_never_trades(self):
        assert decide(self.agent(), ORIGIN, 0.01, float("inf"), 1.0, 0.0) is None

    @settings(deadline=None)
    @given(
        side=st.sampled_from(["yes", "no"]),
        radius=st.floats(min_value=0.01, max_value=3.0),
        res=st.floats(min_value=0.05, max_value=0.95),
        sens=st.floats(min_value=0.0, max_value=5.0),
        dist=st.floats(min_value=0.0, max_value=3.0),
        margin=st.floats(min_value=0.0, max_value=1.0),
    )
    def test_buy_set_downward_closed_in_price(
        self, side, radius, res, sens, dist, margin
    ):
        """Once the agent stops buying as its side's price rises, no
        higher price re-creates willingness to buy."""
        a = Agent(
            uid=0,
            genome=genome(
                side=side, base_radius=radius, reservation=res, sensitivity=sens
            ),
        )
        x = point_at_distance(dist)
        stopped = False
        for p_side in np.linspace(0.02, 0.98, 49):
            p_yes = p_side if side == "yes" else 1.0 - p_side
            order = decide(a, x, float(p_yes), margin, 1.0, 0.0)
            if order is None:
                stopped = True
            else:
                assert not stopped, f"buy reappeared at p_side={p_side}"


class TestMutate:
    def test_zero_rates_identical_child(self):
        g = genome()
        child = mutate(g, MutationRates(0.0, 0.0, 0.0), (1.3, -0.7, 2.1))
        assert child == g

    def test_center_and_side_never_change(self):
        g = genome(side="no")
        child = mutate(g, MutationRates(0.5, 0.5, 0.2), (1.0, 1.0, 1.0))
        assert child.side == g.side
        assert np.array_equal(child.center, g.center)
        assert child.base_radius != g.base_radius

    def test_reservation_clamps(self):
        g = genome(reservation=0.98)
        child = mutate(g, MutationRates(0.0, 0.0, 0.1), (0.0, 0.0, 10.0))
        assert child.reservation == 0.99
        g = genome(reservation=0.02)
        child = mutate(g, MutationRates(0.0, 0.0, 0.1), (0.0, 0.0, -10.0))
        assert child.reservation == 0.01


class TestSpawn:
    def test_one_agent_per_record_clone(self, toy_claims):
        pop = spawn_population(toy_claims, 3, SpawnDefaults(), seed=5)
        assert len(pop) == len(toy_claims.records) * 3

    def test_sides_copy_outcomes(self, toy_claims):
        pop = spawn_population(toy_claims, 1, SpawnDefaults(), seed=5)
        for rec, agent in zip(toy_claims.records, pop.agents):
            assert agent.genome.side == ("yes" if rec.outcome == "R" else "no")
            assert np.array_equal(agent.genome.center, rec.features)

    def test_unlabeled_record_rejected(self, toy_claims):
        from dataclasses import replace

        records = tuple(
            replace(r, outcome=None) if i == 0 else r
            for i, r in enumerate(toy_claims.records)
        )
        from repmarket.features import ClaimSet

        unlabeled = ClaimSet(records=records, role="train", scaler=toy_claims.scaler)
        with pytest.raises(DataError, match="no outcome"):
            spawn_population(unlabeled, 1, SpawnDefaults(), seed=5)

    def test_unnormalized_set_rejected(self, toy_claims):
        from repmarket.features import ClaimSet

        raw = ClaimSet(records=toy_claims.records, role="train")
        with pytest.raises(DataError, match="normalized"):
            spawn_population(raw, 1, SpawnDefaults(), seed=5)

    def test_spawn_deterministic(self, toy_claims):
        a = spawn_population(toy_claims, 2, SpawnDefaults(), seed=9)
        b = spawn_population(toy_claims, 2, SpawnDefaults(), seed=9)
        assert a.to_dict() == b.to_dict()
        c = spawn_population(toy_claims, 2, SpawnDefaults(), seed=10)
        assert a.to_dict() != c.to_dict()

    def test_save_load_byte_identical(self, toy_claims, tmp_path):
        pop = spawn_population(toy_claims, 2, SpawnDefaults(), seed=9)
        p1 = tmp_path / "pop1.json"
        p2 = tmp_path / "pop2.json"
        pop.save(p1)
        Population.load(p1).save(p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestGenomeValidation:
    def test_bad_radius_rejected(self):
        with pytest.raises(DataError, match="radius"):
            genome(base_radius=0.0)

    def test_bad_reservation_rejected(self):
        with pytest.raises(DataError, match="reservation"):
            genome(reservation=1.0)

    def test_bad_side_rejected(self):
        with pytest.raises(DataError, match="side"):
            genome(side="maybe")

    def test_negative_sensitivity_rejected(self):
        with pytest.raises(DataError, match="sensitivity"):
            genome(sensitivity=-0.1)
