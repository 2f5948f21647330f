"""Shared fixtures: a separable two-cluster claim corpus and frozen
training configurations used across the evolution and acceptance tests."""

import numpy as np
import pytest

from repmarket.agents import MutationRates, SpawnDefaults
from repmarket.evolution import TrainConfig
from repmarket.features import ClaimRecord, ClaimSet, N_FEATURES, fit_normalize


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter):
    lines = getattr(terminalreporter.config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


def build_two_cluster_claims(seed: int = 11) -> ClaimSet:
    """Twenty claims in two tight feature clusters: ten replicating
    claims near 0.3 and ten non-replicating near 0.7. Linearly separable
    so a healthy search must reach perfect training accuracy."""
    rng = np.random.default_rng(seed)
    records = []
    for i in range(10):
        feats = 0.3 + rng.uniform(-0.05, 0.05, N_FEATURES)
        records.append(
            ClaimRecord(
                claim_id=f"R{i:02d}",
                domain="psychology",
                features=feats,
                outcome="R",
            )
        )
    for i in range(10):
        feats = 0.7 + rng.uniform(-0.05, 0.05, N_FEATURES)
        records.append(
            ClaimRecord(
                claim_id=f"N{i:02d}",
                domain="economics",
                features=feats,
                outcome="NR",
            )
        )
    return fit_normalize(ClaimSet(records=tuple(records), role="train"))


@pytest.fixture(scope="session")
def toy_claims() -> ClaimSet:
    return build_two_cluster_claims()


def ga_sanity_config(seed: int = 1) -> TrainConfig:
    """Training configuration for the ten-claim-per-side corpus: single
    tick markets so every decision happens at price 0.5, which makes the
    best-fitness trajectory exactly monotone under elitism."""
    return TrainConfig(
        generations=20,
        liquidity=20.0,
        lam=1.0,
        percent_difference=0.02,
        market_duration=1,
        clones_per_point=3,
        selection_fraction=0.5,
        seed=seed,
        spawn=SpawnDefaults(
            base_radius=0.45,
            radius_jitter=0.2,
            reservation=0.55,
            reservation_jitter=0.02,
            sensitivity=1.0,
            sensitivity_jitter=0.3,
        ),
        mutation=MutationRates(radius=0.1, sensitivity=0.1, reservation=0.03),
    )


def gate_base_config(seed: int = 2) -> TrainConfig:
    """Short multi-tick training used by the plausibility-gate tests;
    base_radius is the swept knob."""
    return TrainConfig(
        generations=3,
        liquidity=50.0,
        lam=0.5,
        percent_difference=0.02,
        market_duration=60,
        clones_per_point=3,
        selection_fraction=0.5,
        seed=seed,
        spawn=SpawnDefaults(
            base_radius=0.45,
            radius_jitter=0.2,
            reservation=0.6,
            reservation_jitter=0.05,
            sensitivity=1.0,
            sensitivity_jitter=0.3,
        ),
        mutation=MutationRates(radius=0.1, sensitivity=0.1, reservation=0.03),
    )


@pytest.fixture
def ga_config() -> TrainConfig:
    return ga_sanity_config()


@pytest.fixture
def gate_config() -> TrainConfig:
    return gate_base_config()
