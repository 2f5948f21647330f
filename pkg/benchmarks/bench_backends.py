"""Benchmark the batch tick kernels: compiled backend vs the pure-numpy
fallback, with a bitwise parity check between the two.

Usage:
    python3 benchmarks/bench_backends.py [--agents 1000] [--ticks 43200]

Each backend drives the same synthetic population over the same span and
must produce identical trades, quantities, and final cash arrays; the
table reports wall time, ticks/s, and agent-ticks/s (best of --repeats).
"""

import argparse
import hashlib
import logging
import time

import numpy as np

from repmarket.kernels import BACKENDS, HAVE_NUMBA, run_span, warmup

logger = logging.getLogger("bench_backends")

BUFFER_CAP = 200_000


def synthetic_population(n: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    return {
        "dist": rng.uniform(0.0, 1.2, n),
        "side_yes": (rng.uniform(size=n) < 0.5).astype(np.int8),
        "base_radius": rng.uniform(0.05, 1.0, n),
        "reservation": rng.uniform(0.2, 0.9, n),
        "sensitivity": rng.uniform(0.0, 3.0, n),
        "uids": np.arange(n, dtype=np.uint64),
    }


def drive(backend: str, cols: dict, ticks: int, *, b, lam, margin, seed, cash0):
    """Run the full span on one backend, draining the trade buffers as
    they fill. Returns (trades, q_yes, q_no, cash, digest)."""
    n = cols["dist"].shape[0]
    cash = np.full(n, cash0)
    holdings = np.zeros(n, dtype=np.int64)
    trade_counts = np.zeros(n, dtype=np.int64)
    cap = max(BUFFER_CAP, n)
    out_tick = np.zeros(cap, dtype=np.int64)
    out_agent = np.zeros(cap, dtype=np.int64)
    out_cost = np.zeros(cap)
    out_price = np.zeros(cap)
    q_yes = q_no = 0.0
    tick = 0
    total = 0
    digest = hashlib.blake2b(digest_size=16)
    while tick < ticks:
        used, tick, q_yes, q_no = run_span(
            tick,
            ticks,
            q_yes,
            q_no,
            b,
            lam,
            margin,
            seed,
            cols["dist"],
            cols["side_yes"],
            cols["base_radius"],
            cols["reservation"],
            cols["sensitivity"],
            cols["uids"],
            cash,
            holdings,
            trade_counts,
            out_tick,
            out_agent,
            out_cost,
            out_price,
            backend=backend,
        )
        total += used
        digest.update(out_tick[:used].tobytes())
        digest.update(out_agent[:used].tobytes())
        digest.update(out_cost[:used].tobytes())
        digest.update(out_price[:used].tobytes())
    digest.update(cash.tobytes())
    digest.update(holdings.tobytes())
    return total, q_yes, q_no, cash, digest.hexdigest()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--agents", type=int, default=1000)
    parser.add_argument("--ticks", type=int, default=43_200)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--b", type=float, default=300.0)
    parser.add_argument("--lam", type=float, default=0.05)
    parser.add_argument("--margin", type=float, default=0.02)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    backends = [b for b in BACKENDS if b != "numba" or HAVE_NUMBA]
    if "numba" not in backends:
        logger.info("numba not importable; benchmarking the fallback only")
    cols = synthetic_population(args.agents, args.seed)

    results = {}
    for backend in backends:
        warmup(backend)  # compile outside the timed region
        best = float("inf")
        outcome = None
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            outcome = drive(
                backend,
                cols,
                args.ticks,
                b=args.b,
                lam=args.lam,
                margin=args.margin,
                seed=args.seed,
                cash0=500.0,
            )
            best = min(best, time.perf_counter() - t0)
        results[backend] = (best, outcome)

    digests = {backend: outcome[4] for backend, (_, outcome) in results.items()}
    if len(set(digests.values())) != 1:
        logger.error("PARITY FAILURE: backends disagree: %s", digests)
        return 1

    header = f"{'backend':<8} {'time':>9} {'ticks/s':>12} {'agent-ticks/s':>15} {'trades':>9}"
    logger.info(
        "agents=%d ticks=%d lam=%g b=%g (best of %d)",
        args.agents,
        args.ticks,
        args.lam,
        args.b,
        args.repeats,
    )
    logger.info(header)
    for backend, (elapsed, outcome) in results.items():
        trades = outcome[0]
        logger.info(
            "%-8s %8.3fs %12.0f %15.0f %9d",
            backend,
            elapsed,
            args.ticks / elapsed,
            args.ticks * args.agents / elapsed,
            trades,
        )
    if len(results) == 2:
        speedup = results["numpy"][0] / results["numba"][0]
        logger.info("numba speedup over numpy: %.1fx", speedup)
    logger.info("parity: all backends bitwise identical (%s)", digests[backends[0]])
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
