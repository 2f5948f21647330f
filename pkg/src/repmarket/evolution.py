"""Genetic-algorithm training of the agent population and the
dual-criteria hyperparameter search.

Training repeats a fixed epoch: run one short market per labeled
training claim (fresh market state and reset agent cash each time,
settled at the claim's outcome), accumulate each agent's cash profit or
loss across the epoch as its fitness, then apply elitist truncation -
the top-fraction agents with non-negative fitness survive unchanged and
produce mutated clones to restore population size. Centers and sides
never change, so selection acts purely on radius, reservation price,
and price sensitivity.

A candidate configuration is judged by two complementary criteria:
training accuracy (closing price classifies the claim at 0.5) and the
plausibility of participation patterns. Configurations whose agents
almost never trade, or all trade on every claim with no across-claim
variation, are rejected regardless of accuracy.

All randomness flows from the keyed counter streams, so a (config, seed)
pair reproduces training byte for byte. Market seeds derive from the
claim id only - not the generation - so an elite agent re-evaluated in
an unchanged context earns exactly the same fitness.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from ._rng import derive_seed, normal
from .agents import (
    Agent,
    MutationRates,
    Population,
    SpawnDefaults,
    mutate,
    spawn_population,
)
from .errors import DataError
from .features import ClaimRecord, ClaimSet, Scaler
from .lmsr import predict
from .sim import ARTIFICIAL, MarketSession, SimConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run. lam is the per-tick
    Bernoulli participation rate (lambda is a reserved word)."""

    lam: float = 0.25
    liquidity: float = 30.0
    percent_difference: float = 0.02
    initial_agent_cash: float = 500.0
    market_duration: int = 60
    clones_per_point: int = 1
    generations: int = 20
    selection_fraction: float = 0.5
    mutation: MutationRates = field(default_factory=MutationRates)
    spawn: SpawnDefaults = field(default_factory=SpawnDefaults)
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0):
            raise DataError(f"lam must lie in [0, 1], got {self.lam}")
        if self.liquidity <= 0.0:
            raise DataError(f"liquidity must be positive, got {self.liquidity}")
        if self.percent_difference < 0.0:
            raise DataError(
                f"percent_difference must be >= 0, got {self.percent_difference}"
            )
        if self.initial_agent_cash <= 0.0:
            raise DataError(
                f"initial_agent_cash must be positive, got {self.initial_agent_cash}"
            )
        if self.market_duration < 1:
            raise DataError(
                f"market_duration must be >= 1, got {self.market_duration}"
            )
        if self.clones_per_point < 1:
            raise DataError(
                f"clones_per_point must be >= 1, got {self.clones_per_point}"
            )
        if self.generations < 0:
            raise DataError(f"generations must be >= 0, got {self.generations}")
        if not (0.0 < self.selection_fraction <= 1.0):
            raise DataError(
                f"selection_fraction must lie in (0, 1], got {self.selection_fraction}"
            )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        if "mutation" in data and isinstance(data["mutation"], dict):
            data["mutation"] = MutationRates(**data["mutation"])
        if "spawn" in data and isinstance(data["spawn"], dict):
            data["spawn"] = SpawnDefaults(**data["spawn"])
        return cls(**data)


@dataclass(frozen=True)
class ParticipationStats:
    """Participation pattern of one evaluation epoch."""

    per_claim: tuple[float, ...]  # fraction of agents trading >= once, per claim
    mean_active: float  # mean per-tick active-agent fraction
    variance: float  # across-claim variance of per_claim

    def __post_init__(self):
        for frac in self.per_claim:
            if not (0.0 <= frac <= 1.0):
                raise DataError(f"participation fraction out of [0,1]: {frac}")

    @property
    def mean(self) -> float:
        if not self.per_claim:
            return 0.0
        return sum(self.per_claim) / len(self.per_claim)


@dataclass(frozen=True)
class PlausibilityResult:
    passed: bool
    score: float
    mean: float
    variance: float
    reason: str = ""


@dataclass(frozen=True)
class GenerationMetrics:
    generation: int
    best_fitness: float
    mean_fitness: float
    accuracy: float
    participation_mean: float
    participation_variance: float
    mean_active: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class TrainedMarket:
    """A trained population plus everything needed to re-run it."""

    population: Population
    config: TrainConfig
    scaler: Scaler | None
    history: list[GenerationMetrics]
    stats: ParticipationStats
    accuracy: float

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "scaler": self.scaler.to_dict() if self.scaler else None,
            "history": [m.to_dict() for m in self.history],
            "stats": {
                "per_claim": list(self.stats.per_claim),
                "mean_active": self.stats.mean_active,
                "variance": self.stats.variance,
            },
            "accuracy": self.accuracy,
        }

    def save(self, directory: str | os.PathLike) -> None:
        """Write population.json and trained.json; both canonical JSON,
        byte-identical across reruns of the same (config, seed)."""
        directory = os.fspath(directory)
        os.makedirs(directory, exist_ok=True)
        self.population.save(os.path.join(directory, "population.json"))
        with open(
            os.path.join(directory, "trained.json"), "w", encoding="utf-8"
        ) as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, directory: str | os.PathLike) -> "TrainedMarket":
        directory = os.fspath(directory)
        population = Population.load(os.path.join(directory, "population.json"))
        with open(
            os.path.join(directory, "trained.json"), "r", encoding="utf-8"
        ) as fh:
            data = json.load(fh)
        stats = ParticipationStats(
            per_claim=tuple(data["stats"]["per_claim"]),
            mean_active=data["stats"]["mean_active"],
            variance=data["stats"]["variance"],
        )
        return cls(
            population=population,
            config=TrainConfig.from_dict(data["config"]),
            scaler=Scaler.from_dict(data["scaler"]) if data["scaler"] else None,
            history=[GenerationMetrics(**m) for m in data["history"]],
            stats=stats,
            accuracy=data["accuracy"],
        )


def run_training_market(
    population: Population,
    claim: ClaimRecord,
    config: TrainConfig,
    backend: str | None = None,
):
    """One 60-tick (by default) agents-only market on a labeled claim.
    Returns (closing_price, per-agent P&L vector, (participation
    fraction, mean active fraction)). The market seed depends on the
    claim id but not the generation, keeping elite fitness stable."""
    if claim.outcome is None:
        raise DataError(f"training claim {claim.claim_id!r} has no outcome")
    if not len(population):
        raise DataError("population is empty")
    sim_config = SimConfig(
        ticks=config.market_duration,
        effective_tick_floor=0,
        seed=derive_seed(config.seed, "train-market", claim.claim_id),
    )
    session = MarketSession(
        market_id=f"train-{claim.claim_id}",
        claim=claim,
        population=population,
        config=sim_config,
        b=config.liquidity,
        lam=config.lam,
        margin=config.percent_difference,
        agent_cash=config.initial_agent_cash,
        mode=ARTIFICIAL,
        backend=backend,
        record_trades=False,
    )
    closing = session.run_batch()
    session.settle(claim.outcome)
    pnl = session.agent_pnl()
    return closing, pnl, (session.participation_fraction(), session.mean_active())


@dataclass(frozen=True)
class EpochResult:
    fitness: np.ndarray
    closing_prices: dict[str, float]
    accuracy: float
    stats: ParticipationStats


def run_epoch(
    population: Population,
    corpus: ClaimSet,
    config: TrainConfig,
    backend: str | None = None,
) -> EpochResult:
    """Evaluate the population on every claim of the corpus in order and
    reduce fitness, accuracy, and participation stats."""
    if not len(corpus):
        raise DataError("training corpus is empty")
    fitness = np.zeros(len(population), dtype=np.float64)
    closing_prices: dict[str, float] = {}
    per_claim = []
    active = []
    correct = 0
    for claim in corpus:
        closing, pnl, (fraction, mean_active) = run_training_market(
            population, claim, config, backend=backend
        )
        fitness += pnl
        closing_prices[claim.claim_id] = closing
        per_claim.append(fraction)
        active.append(mean_active)
        if predict(closing) == claim.outcome:
            correct += 1
    stats = ParticipationStats(
        per_claim=tuple(per_claim),
        mean_active=float(np.mean(active)) if active else 0.0,
        variance=float(np.var(per_claim)) if per_claim else 0.0,
    )
    return EpochResult(
        fitness=fitness,
        closing_prices=closing_prices,
        accuracy=correct / len(corpus),
        stats=stats,
    )


def fitness_rank(population: Population, fitness: np.ndarray) -> list[int]:
    """Indices sorted best-first; ties broken by lower uid so ranking is
    total and deterministic."""
    uids = [a.uid for a in population.agents]
    return sorted(
        range(len(uids)), key=lambda i: (-float(fitness[i]), uids[i])
    )


def evolve_generation(
    population: Population, fitness: np.ndarray, config: TrainConfig
) -> Population:
    """Elitist truncation. Survivors: the top selection-fraction of the
    population, minus any with negative fitness; if every agent lost
    money, the single best survives anyway. Offspring are mutated clones
    of the survivors, assigned round-robin, with fresh uids. Population
    size never changes."""
    n = len(population)
    if fitness.shape != (n,):
        raise DataError(
            f"fitness has shape {fitness.shape}, population has {n} agents"
        )
    k = max(1, math.floor(config.selection_fraction * n))
    ranked = fitness_rank(population, fitness)
    survivors = [
        population.agents[i] for i in ranked[:k] if fitness[i] >= 0.0
    ]
    if not survivors:
        survivors = [population.agents[ranked[0]]]
    survivors = sorted(survivors, key=lambda a: a.uid)
    mut_seed = derive_seed(population.seed, "evolve", population.generation)
    next_uid = population.next_uid
    children: list[Agent] = []
    slot = 0
    while len(survivors) + len(children) < n:
        parent = survivors[slot % len(survivors)]
        slot += 1
        uid = next_uid
        next_uid += 1
        normals = (
            normal(mut_seed, uid, 0),
            normal(mut_seed, uid, 1),
            normal(mut_seed, uid, 2),
        )
        children.append(
            Agent(uid=uid, genome=mutate(parent.genome, config.mutation, normals))
        )
    return Population(
        agents=survivors + children,
        generation=population.generation + 1,
        seed=population.seed,
        next_uid=next_uid,
    )


def train(
    corpus: ClaimSet,
    config: TrainConfig,
    backend: str | None = None,
    progress=None,
) -> TrainedMarket:
    """Full training loop: spawn, then per generation run an epoch over
    the corpus, record metrics, and evolve. A final evaluation epoch
    (no evolution) records the completed population's accuracy and
    participation pattern."""
    if not corpus.normalized:
        raise DataError("training corpus must be normalized")
    population = spawn_population(
        corpus, config.clones_per_point, config.spawn, seed=config.seed
    )
    history: list[GenerationMetrics] = []
    for gen in range(config.generations):
        epoch = run_epoch(population, corpus, config, backend=backend)
        metrics = GenerationMetrics(
            generation=gen,
            best_fitness=float(epoch.fitness.max()),
            mean_fitness=float(epoch.fitness.mean()),
            accuracy=epoch.accuracy,
            participation_mean=epoch.stats.mean,
            participation_variance=epoch.stats.variance,
            mean_active=epoch.stats.mean_active,
        )
        history.append(metrics)
        if progress is not None:
            progress(metrics)
        population = evolve_generation(population, epoch.fitness, config)
    final = run_epoch(population, corpus, config, backend=backend)
    metrics = GenerationMetrics(
        generation=config.generations,
        best_fitness=float(final.fitness.max()),
        mean_fitness=float(final.fitness.mean()),
        accuracy=final.accuracy,
        participation_mean=final.stats.mean,
        participation_variance=final.stats.variance,
        mean_active=final.stats.mean_active,
    )
    history.append(metrics)
    if progress is not None:
        progress(metrics)
    return TrainedMarket(
        population=population,
        config=config,
        scaler=corpus.scaler,
        history=history,
        stats=final.stats,
        accuracy=final.accuracy,
    )


DEFAULT_BOUNDS = (0.05, 0.95)
VARIANCE_FLOOR = 1e-6


def _gate_values(
    mean: float,
    variance: float,
    bounds: tuple[float, float],
    variance_floor: float,
) -> PlausibilityResult:
    low, high = bounds
    if not (0.0 <= low < high <= 1.0):
        raise DataError(f"bounds must satisfy 0 <= low < high <= 1, got {bounds}")
    reason = ""
    if mean < low:
        reason = f"mean participation {mean:.4f} below {low} (negligible trading)"
    elif mean > high:
        reason = f"mean participation {mean:.4f} above {high} (universal trading)"
    elif variance < variance_floor:
        reason = (
            f"across-claim variance {variance:.2e} below {variance_floor:.0e} "
            "(no differentiation)"
        )
    center = (low + high) / 2.0
    half = (high - low) / 2.0
    mid_term = max(0.0, 1.0 - abs(mean - center) / half)
    var_term = 1.0 - math.exp(-variance / 0.01)
    score = mid_term * var_term
    passed = reason == ""
    return PlausibilityResult(
        passed=passed,
        score=score if passed else 0.0,
        mean=mean,
        variance=variance,
        reason=reason,
    )


def participation_plausibility(
    stats: ParticipationStats,
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
    variance_floor: float = VARIANCE_FLOOR,
) -> PlausibilityResult:
    """Reject participation patterns that are negligible, universal, or
    undifferentiated across claims; score the rest toward mid-range
    means with healthy across-claim variance."""
    return _gate_values(stats.mean, stats.variance, bounds, variance_floor)


def trajectory_plausibility(
    history: list[GenerationMetrics],
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
    variance_floor: float = VARIANCE_FLOOR,
) -> PlausibilityResult:
    """Gate every evaluation epoch of a training run. Selection can breed a
    degenerate starting population into a healthy-looking one, so a single
    look at the final epoch would hide the pathology; a config passes only
    if all epochs pass, and the reported score is the final epoch's."""
    if not history:
        raise DataError("training history is empty")
    for metrics in history:
        result = _gate_values(
            metrics.participation_mean,
            metrics.participation_variance,
            bounds,
            variance_floor,
        )
        if not result.passed:
            return dataclasses.replace(
                result,
                reason=f"{result.reason} at generation {metrics.generation}",
            )
    final = history[-1]
    return _gate_values(
        final.participation_mean, final.participation_variance, bounds, variance_floor
    )


@dataclass(frozen=True)
class SearchRow:
    config: TrainConfig
    accuracy: float
    plausible: bool
    score: float
    reason: str


@dataclass
class SearchResult:
    best: TrainConfig
    best_plausible: bool
    rows: list[SearchRow]

    def to_csv(self, path) -> None:
        import csv as _csv

        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = _csv.writer(fh, lineterminator="\n")
            writer.writerow(
                [
                    "lam",
                    "liquidity",
                    "percent_difference",
                    "base_radius",
                    "generations",
                    "seed",
                    "accuracy",
                    "plausible",
                    "score",
                    "reason",
                ]
            )
            for row in self.rows:
                cfg = row.config
                writer.writerow(
                    [
                        cfg.lam,
                        cfg.liquidity,
                        cfg.percent_difference,
                        cfg.spawn.base_radius,
                        cfg.generations,
                        cfg.seed,
                        f"{row.accuracy:.6f}",
                        row.plausible,
                        f"{row.score:.6f}",
                        row.reason,
                    ]
                )


def expand_grid(grid: dict, base: TrainConfig | None = None) -> list[TrainConfig]:
    """Cartesian product of per-field value lists over a base config.
    Nested spawn/mutation fields use dotted keys (e.g. spawn.base_radius)."""
    if base is None:
        base = TrainConfig()
    items = sorted(grid.items())
    configs = [base]
    for key, values in items:
        if not isinstance(values, (list, tuple)):
            values = [values]
        expanded = []
        for cfg in configs:
            for value in values:
                expanded.append(_with_field(cfg, key, value))
        configs = expanded
    return configs


def _with_field(cfg: TrainConfig, key: str, value) -> TrainConfig:
    if key.startswith("spawn."):
        spawn = dataclasses.replace(cfg.spawn, **{key[6:]: value})
        return dataclasses.replace(cfg, spawn=spawn)
    if key.startswith("mutation."):
        mutation = dataclasses.replace(cfg.mutation, **{key[9:]: value})
        return dataclasses.replace(cfg, mutation=mutation)
    if not hasattr(cfg, key):
        raise DataError(f"unknown config field {key!r}")
    return dataclasses.replace(cfg, **{key: value})


def hyperparameter_search(
    configs: list[TrainConfig],
    corpus: ClaimSet,
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
    backend: str | None = None,
    progress=None,
) -> SearchResult:
    """Train every candidate and pick the most accurate among those with
    plausible participation; ties break toward lower lambda, then lower
    liquidity, then grid order. If nothing passes, the most accurate
    config is returned flagged implausible."""
    if not configs:
        raise DataError("hyperparameter grid is empty")
    rows: list[SearchRow] = []
    for idx, config in enumerate(configs):
        trained = train(corpus, config, backend=backend)
        plaus = trajectory_plausibility(trained.history, bounds=bounds)
        row = SearchRow(
            config=config,
            accuracy=trained.accuracy,
            plausible=plaus.passed,
            score=plaus.score,
            reason=plaus.reason,
        )
        rows.append(row)
        if progress is not None:
            progress(idx, row)
    order = sorted(
        range(len(rows)),
        key=lambda i: (
            -rows[i].accuracy,
            rows[i].config.lam,
            rows[i].config.liquidity,
            i,
        ),
    )
    passing = [i for i in order if rows[i].plausible]
    if passing:
        best_idx = passing[0]
        return SearchResult(
            best=rows[best_idx].config, best_plausible=True, rows=rows
        )
    logger.warning("no configuration passed the plausibility gate")
    return SearchResult(best=rows[order[0]].config, best_plausible=False, rows=rows)
