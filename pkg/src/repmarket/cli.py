"""Command-line entry points: ingest, train, tune, simulate, evaluate,
serve, and replay.

Every writing command drops a resolved-config.json next to its outputs
recording exactly what ran. Exit codes are stable: 0 success, 2 for
configuration problems (bad flags, bad config file), 3 for data problems
(malformed or missing inputs), 4 for runtime failures.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import sys

import click

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 fallback
    import tomli as tomllib

from . import evolution, features, journal as journal_mod, kernels, sim
from .errors import ConfigError, DataError, RepMarketError

logger = logging.getLogger(__name__)

ENV_BIND = "REPMARKET_BIND"
ENV_JOURNAL_DIR = "REPMARKET_JOURNAL_DIR"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _load_config(path: str | None, section: str) -> dict:
    """Read one section of a TOML config file ({} when absent)."""
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}")
    value = data.get(section, {})
    if not isinstance(value, dict):
        raise ConfigError(f"config section [{section}] must be a table")
    return value


def _apply_sets(config: dict, sets: tuple[str, ...]) -> dict:
    """Apply --set key=value overrides. Values are parsed as JSON and
    fall back to raw strings; dotted keys write into subtables."""
    config = json.loads(json.dumps(config))  # deep copy, JSON-safe
    for item in sets:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        target = config
        parts = key.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ConfigError(f"--set key {key!r} descends through a scalar")
        target[parts[-1]] = value
    return config


def _write_resolved(out_dir: str, command: str, resolved: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    payload = {"command": command, **resolved}
    path = os.path.join(out_dir, "resolved-config.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _train_config(config: dict) -> evolution.TrainConfig:
    try:
        return evolution.TrainConfig.from_dict(config)
    except TypeError as exc:
        raise ConfigError(f"bad train config: {exc}")


@click.group()
@click.option("--log-level", default="WARNING", show_default=True)
def cli(log_level: str):
    """Replication-market toolkit."""
    logging.basicConfig(
        level=getattr(logging, log_level.upper(), logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


@cli.command()
@click.option("--train", "train_path", required=True, type=click.Path())
@click.option("--test", "test_path", type=click.Path(), default=None)
@click.option("--out", "out_dir", required=True, type=click.Path())
def ingest(train_path: str, test_path: str | None, out_dir: str):
    """Load raw claim files, fit normalization on the training set, and
    write normalized claim sets plus the scaler."""
    train = features.fit_normalize(features.ingest(train_path, role="train"))
    os.makedirs(out_dir, exist_ok=True)
    features.save_claims(train, os.path.join(out_dir, "claims-train.jsonl"))
    train.scaler.save(os.path.join(out_dir, "scaler.json"))
    written = {"train": "claims-train.jsonl", "scaler": "scaler.json"}
    if test_path is not None:
        test = features.apply_normalize(
            features.ingest(test_path, role="test"), train.scaler
        )
        features.save_claims(test, os.path.join(out_dir, "claims-test.jsonl"))
        written["test"] = "claims-test.jsonl"
    _write_resolved(
        out_dir,
        "ingest",
        {"train": train_path, "test": test_path, "written": written},
    )
    click.echo(f"ingested {len(train.records)} training claims -> {out_dir}")


def _load_claims(path: str, role: str, scaler_path: str | None = None):
    cs = features.ingest(path, role=role)
    if scaler_path is not None:
        scaler = features.Scaler.load(scaler_path)
        return features.apply_normalize(cs, scaler)
    return cs


@cli.command()
@click.option("--train", "train_path", required=True, type=click.Path())
@click.option("--scaler", "scaler_path", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--set", "sets", multiple=True, help="Override: key=value (JSON).")
@click.option("--seed", type=int, default=None)
@click.option("--backend", type=click.Choice(kernels.BACKENDS), default=None)
@click.option("--out", "out_dir", required=True, type=click.Path())
def train(train_path, scaler_path, config_path, sets, seed, backend, out_dir):
    """Fit a trading population on labeled claims."""
    raw = _apply_sets(_load_config(config_path, "train"), sets)
    if seed is not None:
        raw["seed"] = seed
    config = _train_config(raw)
    corpus = _load_claims(train_path, "train", scaler_path)
    if corpus.scaler is None:
        corpus = features.fit_normalize(corpus)
    trained = evolution.train(corpus, config, backend=backend)
    trained.save(out_dir)
    _write_resolved(
        out_dir,
        "train",
        {
            "train": train_path,
            "config": config.to_dict(),
            "backend": backend or kernels.default_backend(),
            "accuracy": trained.accuracy,
        },
    )
    final = trained.history[-1]
    click.echo(
        f"trained {len(trained.population)} agents over "
        f"{config.generations} generations: accuracy {trained.accuracy:.3f}, "
        f"best fitness {final.best_fitness:.3f} -> {out_dir}"
    )


@cli.command()
@click.option("--train", "train_path", required=True, type=click.Path())
@click.option("--scaler", "scaler_path", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--set", "sets", multiple=True)
@click.option("--seed", type=int, default=None)
@click.option("--backend", type=click.Choice(kernels.BACKENDS), default=None)
@click.option("--out", "out_dir", required=True, type=click.Path())
def tune(train_path, scaler_path, config_path, sets, seed, backend, out_dir):
    """Grid-search hyperparameters; reject implausible participation."""
    base_raw = _apply_sets(_load_config(config_path, "train"), sets)
    if seed is not None:
        base_raw["seed"] = seed
    grid = _load_config(config_path, "tune")
    if not grid:
        raise ConfigError("tune needs a [tune] table of field = [values] lists")
    base = _train_config(base_raw)
    configs = evolution.expand_grid(grid, base=base)
    corpus = _load_claims(train_path, "train", scaler_path)
    if corpus.scaler is None:
        corpus = features.fit_normalize(corpus)

    def progress(i, row):
        click.echo(
            f"[{i + 1}/{len(configs)}] accuracy={row.accuracy:.3f} "
            f"plausible={row.plausible} {row.reason}"
        )

    result = evolution.hyperparameter_search(
        configs, corpus, backend=backend, progress=progress
    )
    os.makedirs(out_dir, exist_ok=True)
    result.to_csv(os.path.join(out_dir, "search.csv"))
    with open(os.path.join(out_dir, "best-config.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "config": result.best.to_dict(),
                "plausible": result.best_plausible,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    _write_resolved(
        out_dir,
        "tune",
        {
            "train": train_path,
            "grid": grid,
            "base": base.to_dict(),
            "candidates": len(configs),
            "best_plausible": result.best_plausible,
        },
    )
    click.echo(
        f"searched {len(configs)} configs -> {out_dir} "
        f"(best plausible: {result.best_plausible})"
    )


def _read_trace(path: str) -> list[tuple[int, sim.HumanOrder]]:
    """Scripted human trace: JSONL of {tick, participant, side, action}."""
    trace = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                order = sim.HumanOrder(
                    participant=row["participant"],
                    side=row["side"],
                    action=row["action"],
                    order_id=row.get("order_id", f"t{lineno}"),
                )
                trace.append((int(row["tick"]), order))
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad trace row: {exc}")
    return trace


@cli.command()
@click.option("--model", "model_dir", required=True, type=click.Path())
@click.option("--claims", "claims_path", required=True, type=click.Path())
@click.option(
    "--mode",
    type=click.Choice(sim.MODES),
    default=sim.ARTIFICIAL,
    show_default=True,
)
@click.option("--ticks", type=int, default=None, help="Override market length.")
@click.option("--seed", type=int, default=None, help="Override simulation seed.")
@click.option("--trace", "trace_path", type=click.Path(), default=None)
@click.option("--backend", type=click.Choice(kernels.BACKENDS), default=None)
@click.option("--settle/--no-settle", default=False, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def simulate(
    model_dir, claims_path, mode, ticks, seed, trace_path, backend, settle, out_dir
):
    """Run one market per claim and write journals plus a summary."""
    trained = evolution.TrainedMarket.load(model_dir)
    claims = features.ingest(claims_path, role="test")
    if trained.scaler is not None:
        claims = features.apply_normalize(claims, trained.scaler)
    sim_config = sim.SimConfig(
        ticks=ticks if ticks is not None else 43200,
        effective_tick_floor=0,
        seed=seed if seed is not None else trained.config.seed,
    )
    trace = _read_trace(trace_path) if trace_path is not None else None
    if trace and mode == sim.ARTIFICIAL:
        raise ConfigError("--trace requires --mode hybrid or human")
    os.makedirs(out_dir, exist_ok=True)
    runs = []
    for claim in claims.records:
        market_id = f"{claim.claim_id}-{mode}"
        journal_path = os.path.join(out_dir, f"{market_id}.jsonl")
        with journal_mod.Journal(journal_path, fresh=True) as jr:
            run = sim.run_market(
                trained.population if mode != sim.HUMAN_ONLY else None,
                claim,
                sim_config,
                b=trained.config.liquidity,
                lam=trained.config.lam,
                margin=trained.config.percent_difference,
                agent_cash=trained.config.initial_agent_cash,
                mode=mode,
                trace=trace,
                journal=jr,
                backend=backend,
                settle_outcome=claim.outcome if settle else None,
                record_trades=False,
            )
        runs.append(run.summary())
        click.echo(
            f"{claim.claim_id}: closing {run.display_price:.3f} "
            f"-> {run.prediction} ({run.ticks_processed} ticks)"
        )
    with open(os.path.join(out_dir, "runs.json"), "w", encoding="utf-8") as fh:
        json.dump(runs, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_resolved(
        out_dir,
        "simulate",
        {
            "model": model_dir,
            "claims": claims_path,
            "mode": mode,
            "ticks": sim_config.ticks,
            "seed": sim_config.seed,
            "trace": trace_path,
            "backend": backend or kernels.default_backend(),
            "settle": settle,
        },
    )


@cli.command()
@click.option("--runs", "runs_path", required=True, type=click.Path())
@click.option("--truth", "truth_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
def evaluate(runs_path, truth_path, out_dir):
    """Score finished runs against ground-truth outcomes."""
    try:
        with open(runs_path, "r", encoding="utf-8") as fh:
            rows = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"runs file not found: {runs_path}")
    except json.JSONDecodeError as exc:
        raise DataError(f"runs file {runs_path} is not valid JSON: {exc}")
    runs = [
        sim.RunResult(
            claim_id=row["claim_id"],
            closing_price=row["closing_price"],
            mode=row["mode"],
        )
        for row in rows
    ]
    truth = features.ingest(truth_path, role="test")
    report = sim.evaluate(runs, truth)
    os.makedirs(out_dir, exist_ok=True)
    report.to_csv(os.path.join(out_dir, "report.csv"))
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "rows": report.rows,
                "mae": report.mae_by,
                "accuracy": report.accuracy_by,
                "overall_mae": report.overall_mae,
                "overall_accuracy": report.overall_accuracy,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    _write_resolved(
        out_dir, "evaluate", {"runs": runs_path, "truth": truth_path}
    )
    for mode, mae in sorted(report.overall_mae.items()):
        click.echo(
            f"{mode}: MAE {mae:.3f}, accuracy {report.overall_accuracy[mode]:.3f}"
        )


@cli.command()
@click.option("--journal", "journal_path", required=True, type=click.Path())
def replay(journal_path):
    """Verify a journal by exact re-execution."""
    result = journal_mod.replay(journal_path)
    for market_id in sorted(result.markets):
        state = result.markets[market_id]
        closing = (
            f"{state.closing_price:.6f}" if state.closing_price is not None else "-"
        )
        click.echo(
            f"{market_id}: {state.status}, {state.trade_count} trades, "
            f"closing {closing}"
        )
    if not result.ok:
        raise RepMarketError(
            f"journal corrupt at line {result.corrupt_line}: "
            f"{result.corrupt_reason} "
            f"({result.records_applied} records verified)"
        )
    click.echo(f"{result.records_applied} records verified")


@cli.command()
@click.option("--claims", "claims_path", required=True, type=click.Path())
@click.option("--model", "model_dir", type=click.Path(), default=None)
@click.option("--host", default=None, help=f"Bind host (env {ENV_BIND}).")
@click.option("--port", type=int, default=None)
@click.option("--admin-token", default=None, envvar="REPMARKET_ADMIN_TOKEN")
@click.option("--journal", "journal_path", type=click.Path(), default=None)
def serve(claims_path, model_dir, host, port, admin_token, journal_path):
    """Run the trading-event HTTP service."""
    from . import service as service_mod

    bind = os.environ.get(ENV_BIND, "")
    if host is None:
        host = bind.split(":")[0] if bind else "127.0.0.1"
    if port is None:
        port = int(bind.split(":")[1]) if bind and ":" in bind else 8000
    if journal_path is None:
        journal_dir = os.environ.get(ENV_JOURNAL_DIR, ".")
        os.makedirs(journal_dir, exist_ok=True)
        journal_path = os.path.join(journal_dir, "service-journal.jsonl")
    population = None
    scaler = None
    if model_dir is not None:
        trained = evolution.TrainedMarket.load(model_dir)
        population = trained.population
        scaler = trained.scaler
    if scaler is not None:
        claims = features.ingest(claims_path, role="test")
        claims = features.apply_normalize(claims, scaler)
    else:
        # no model: the catalog is its own normalization basis
        claims = features.fit_normalize(features.ingest(claims_path, role="train"))
    if admin_token is None:
        raise ConfigError(
            "an admin token is required (--admin-token or REPMARKET_ADMIN_TOKEN)"
        )
    service = service_mod.MarketService(
        claims,
        journal_path=journal_path,
        admin_token=admin_token,
        population=population,
    )
    click.echo(f"serving on {host}:{port}, journal {journal_path}")
    try:
        service_mod.run_app(service, host=host, port=port)
    finally:
        service.shutdown()


def main(argv=None) -> int:
    """Console entry point with stable exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        return 130
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return EXIT_DATA
    except RepMarketError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_RUNTIME
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
