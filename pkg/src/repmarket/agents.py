"""Geometric trading agents and their per-tick buy decision.

An agent lives at a fixed point in the normalized 41-dim feature space
(the location of the training claim that spawned it) and specializes in
one contract side, YES if that claim replicated and NO otherwise. Each
tick it considers buying a single share of its side iff:

  (a) the market's claim lies inside its effective bid region, a
      Euclidean ball whose radius shrinks once the side's price rises
      above the agent's reservation price:
          r_eff = base_radius * max(0, 1 - sensitivity * max(0, p - res))
  (b) the perceived undervaluation margin (res - p) / p is at least the
      configured percent-difference threshold, and
  (c) an independent Bernoulli(lambda) participation draw succeeds.

Agents only ever buy, and an agent that cannot afford the current cost
abstains silently at execution time. Genomes are immutable; mutation
returns a child with jittered radius/sensitivity/reservation while the
center and side never change.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from ._rng import derive_seed, normal
from .errors import DataError
from .features import N_FEATURES, REPLICATED, ClaimSet
from .lmsr import NO, SIDES, YES

RESERVATION_MIN = 0.01
RESERVATION_MAX = 0.99


@dataclass(frozen=True, eq=False)
class AgentGenome:
    """Heritable agent parameters. center and side are fixed for life."""

    center: np.ndarray
    side: str
    base_radius: float
    reservation: float
    sensitivity: float

    def __post_init__(self):
        arr = np.asarray(self.center, dtype=np.float64)
        if arr.shape != (N_FEATURES,):
            raise DataError(f"genome center must have {N_FEATURES} dims")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "center", arr)
        if self.side not in SIDES:
            raise DataError(f"side must be yes or no, got {self.side!r}")
        if not (self.base_radius > 0.0 and math.isfinite(self.base_radius)):
            raise DataError(f"base_radius must be positive, got {self.base_radius!r}")
        if not (0.0 < self.reservation < 1.0):
            raise DataError(
                f"reservation must lie in (0, 1), got {self.reservation!r}"
            )
        if not (self.sensitivity >= 0.0 and math.isfinite(self.sensitivity)):
            raise DataError(
                f"sensitivity must be non-negative, got {self.sensitivity!r}"
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, AgentGenome):
            return NotImplemented
        return (
            self.side == other.side
            and self.base_radius == other.base_radius
            and self.reservation == other.reservation
            and self.sensitivity == other.sensitivity
            and np.array_equal(self.center, other.center)
        )

    def __hash__(self):
        return hash(
            (self.side, self.base_radius, self.reservation, self.sensitivity)
        )


@dataclass
class Agent:
    """A genome plus identity and a cash account. Cash is reset to the
    configured stake at the start of every market."""

    uid: int
    genome: AgentGenome
    cash: float = 0.0


@dataclass(frozen=True)
class Order:
    """A single-share buy intent emitted by decide()."""

    uid: int
    side: str


def effective_radius(genome: AgentGenome, p_side: float) -> float:
    """Bid-region radius at the current price of the agent's side.
    Equals base_radius at or below the reservation price and contracts
    linearly above it; non-increasing in p_side."""
    overshoot = p_side - genome.reservation
    if overshoot < 0.0:
        overshoot = 0.0
    shrink = 1.0 - genome.sensitivity * overshoot
    if shrink < 0.0:
        shrink = 0.0
    return genome.base_radius * shrink


def in_region(genome: AgentGenome, x: np.ndarray, p_side: float) -> bool:
    """Whether normalized point x falls inside the effective bid region."""
    d = float(np.sqrt(np.sum((np.asarray(x, dtype=np.float64) - genome.center) ** 2)))
    return d <= effective_radius(genome, p_side)


def undervaluation(genome: AgentGenome, p_side: float) -> float:
    """Relative margin the agent perceives: (reservation - p) / p."""
    return (genome.reservation - p_side) / p_side


def decide(
    agent: Agent,
    x: np.ndarray,
    p_yes: float,
    margin: float,
    lam: float,
    draw: float,
) -> Order | None:
    """Per-tick buy decision evaluated at the tick-start price.

    draw is this agent's participation uniform for the tick, taken from
    the keyed counter stream so the decision is a pure function of
    (genome, claim, price, config, seed, tick). The batch kernels
    replicate this arithmetic step for step; the NO-side price is always
    the exact complement 1 - p_yes.
    """
    genome = agent.genome
    p_side = p_yes if genome.side == YES else 1.0 - p_yes
    if draw >= lam:
        return None
    if undervaluation(genome, p_side) < margin:
        return None
    if not in_region(genome, x, p_side):
        return None
    return Order(uid=agent.uid, side=genome.side)


@dataclass(frozen=True)
class MutationRates:
    """Per-field mutation scales: log-normal sigma for the multiplicative
    fields, Gaussian sigma for the additive reservation jitter."""

    radius: float = 0.25
    sensitivity: float = 0.25
    reservation: float = 0.05


def mutate(
    genome: AgentGenome,
    rates: MutationRates,
    normals: tuple[float, float, float],
) -> AgentGenome:
    """Child genome from three standard-normal draws. Zero rates return
    an identical child; center and side are never touched."""
    g_rad, g_sen, g_res = normals
    radius = genome.base_radius * math.exp(rates.radius * g_rad)
    sensitivity = genome.sensitivity * math.exp(rates.sensitivity * g_sen)
    reservation = genome.reservation + rates.reservation * g_res
    if reservation < RESERVATION_MIN:
        reservation = RESERVATION_MIN
    elif reservation > RESERVATION_MAX:
        reservation = RESERVATION_MAX
    return replace(
        genome,
        base_radius=radius,
        sensitivity=sensitivity,
        reservation=reservation,
    )


@dataclass(frozen=True)
class SpawnDefaults:
    """Center values and jitter scales for freshly spawned genomes."""

    base_radius: float = 2.0
    radius_jitter: float = 0.3
    reservation: float = 0.55
    reservation_jitter: float = 0.1
    sensitivity: float = 1.0
    sensitivity_jitter: float = 0.5


@dataclass
class Population:
    """All living agents plus generation counter and the seed that
    reproduces the whole lineage. agents stay sorted by uid; that order
    is the canonical per-tick evaluation order."""

    agents: list[Agent]
    generation: int = 0
    seed: int = 0
    next_uid: int = 0

    def __post_init__(self):
        self.agents = sorted(self.agents, key=lambda a: a.uid)
        uids = [a.uid for a in self.agents]
        if len(set(uids)) != len(uids):
            raise DataError("duplicate agent uid in population")
        if self.agents and self.next_uid <= self.agents[-1].uid:
            self.next_uid = self.agents[-1].uid + 1

    def __len__(self) -> int:
        return len(self.agents)

    def __iter__(self):
        return iter(self.agents)

    def arrays(self) -> dict[str, np.ndarray]:
        """Genome fields packed column-wise for the batch kernels, in
        uid order."""
        n = len(self.agents)
        centers = np.empty((n, N_FEATURES), dtype=np.float64)
        side_yes = np.empty(n, dtype=np.int8)
        base_radius = np.empty(n, dtype=np.float64)
        reservation = np.empty(n, dtype=np.float64)
        sensitivity = np.empty(n, dtype=np.float64)
        uids = np.empty(n, dtype=np.uint64)
        for i, agent in enumerate(self.agents):
            g = agent.genome
            centers[i] = g.center
            side_yes[i] = 1 if g.side == YES else 0
            base_radius[i] = g.base_radius
            reservation[i] = g.reservation
            sensitivity[i] = g.sensitivity
            uids[i] = agent.uid
        return {
            "centers": centers,
            "side_yes": side_yes,
            "base_radius": base_radius,
            "reservation": reservation,
            "sensitivity": sensitivity,
            "uids": uids,
        }

    def to_dict(self) -> dict:
        return {
            "generation": self.generation,
            "seed": self.seed,
            "next_uid": self.next_uid,
            "agents": [
                {
                    "uid": a.uid,
                    "side": a.genome.side,
                    "base_radius": a.genome.base_radius,
                    "reservation": a.genome.reservation,
                    "sensitivity": a.genome.sensitivity,
                    "center": list(a.genome.center),
                }
                for a in self.agents
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Population":
        agents = [
            Agent(
                uid=int(item["uid"]),
                genome=AgentGenome(
                    center=np.array(item["center"], dtype=np.float64),
                    side=item["side"],
                    base_radius=float(item["base_radius"]),
                    reservation=float(item["reservation"]),
                    sensitivity=float(item["sensitivity"]),
                ),
            )
            for item in data["agents"]
        ]
        return cls(
            agents=agents,
            generation=int(data["generation"]),
            seed=int(data["seed"]),
            next_uid=int(data["next_uid"]),
        )

    def save(self, path: str | os.PathLike) -> None:
        """Persist as canonical JSON; reloading is byte-identical."""
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Population":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def spawn_population(
    train: ClaimSet,
    clones_per_point: int,
    defaults: SpawnDefaults,
    seed: int,
) -> Population:
    """One agent per (training record x clone). The agent sits exactly on
    the record's normalized features; its side copies the record's
    outcome; radius, reservation, and sensitivity start at the defaults
    with seeded jitter so clones differ."""
    if clones_per_point < 1:
        raise DataError(f"clones_per_point must be >= 1, got {clones_per_point}")
    if not train.normalized:
        raise DataError("training set must be normalized before spawning agents")
    spawn_seed = derive_seed(seed, "spawn")
    agents: list[Agent] = []
    uid = 0
    for rec in train.records:
        if rec.outcome is None:
            raise DataError(
                f"training claim {rec.claim_id!r} has no outcome label"
            )
        side = YES if rec.outcome == REPLICATED else NO
        for _ in range(clones_per_point):
            radius = defaults.base_radius * math.exp(
                defaults.radius_jitter * normal(spawn_seed, uid, 0)
            )
            sensitivity = defaults.sensitivity * math.exp(
                defaults.sensitivity_jitter * normal(spawn_seed, uid, 1)
            )
            reservation = (
                defaults.reservation
                + defaults.reservation_jitter * normal(spawn_seed, uid, 2)
            )
            reservation = min(
                max(reservation, RESERVATION_MIN), RESERVATION_MAX
            )
            genome = AgentGenome(
                center=rec.features,
                side=side,
                base_radius=radius,
                reservation=reservation,
                sensitivity=sensitivity,
            )
            agents.append(Agent(uid=uid, genome=genome))
            uid += 1
    return Population(agents=agents, generation=0, seed=seed, next_uid=uid)
