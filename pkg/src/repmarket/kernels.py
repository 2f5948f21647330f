"""Batch tick kernels: compiled and vectorized backends with identical output.

The hot loop of a market run evaluates every agent's buy decision each
tick and executes the resulting single-share buys in uid order. Two
implementations are provided:

  numba  - an @njit compiled loop (default when numba imports)
  numpy  - a vectorized fallback with a scalar execution loop

Backend selection: the REPMARKET_BACKEND environment variable ("numba"
or "numpy"), else numba when available. Both backends perform the same
float64 operations in the same order, and the participation hash is pure
integer arithmetic, so they produce bit-identical trades, prices, and
cash balances; the test suite asserts this. Keep fastmath off: the
reassociations it licenses would break cross-backend and replay parity.

A span call advances ticks [tick_start, tick_end) until the trade buffer
cannot be guaranteed to hold another full tick, then reports how far it
got; the caller drains the buffer and continues.
"""

from __future__ import annotations

import os

import numpy as np

from . import lmsr
from ._rng import GAMMA, _INV53, uniforms_np
from .errors import ConfigError

ENV_VAR = "REPMARKET_BACKEND"
BACKENDS = ("numba", "numpy")

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False


def default_backend() -> str:
    """Resolve the backend from the environment, else prefer numba."""
    choice = os.environ.get(ENV_VAR, "").strip().lower()
    if choice:
        if choice not in BACKENDS:
            raise ConfigError(
                f"{ENV_VAR} must be one of {BACKENDS}, got {choice!r}"
            )
        if choice == "numba" and not HAVE_NUMBA:
            raise ConfigError(f"{ENV_VAR}=numba but numba is not importable")
        return choice
    return "numba" if HAVE_NUMBA else "numpy"


def _run_span_numpy(
    tick_start: int,
    tick_end: int,
    q_yes: float,
    q_no: float,
    b: float,
    lam: float,
    margin: float,
    seed: int,
    dist: np.ndarray,
    side_yes: np.ndarray,
    base_radius: np.ndarray,
    reservation: np.ndarray,
    sensitivity: np.ndarray,
    uids: np.ndarray,
    cash: np.ndarray,
    holdings: np.ndarray,
    trade_counts: np.ndarray,
    out_tick: np.ndarray,
    out_agent: np.ndarray,
    out_cost: np.ndarray,
    out_price: np.ndarray,
):
    n = dist.shape[0]
    cap = out_tick.shape[0]
    used = 0
    tick = tick_start
    yes_mask = side_yes == 1
    while tick < tick_end:
        if cap - used < n:
            break
        # decisions all use the tick-start price; executions below move it
        p_yes = lmsr.price_yes(q_yes, q_no, b)
        p_side = np.where(yes_mask, p_yes, 1.0 - p_yes)
        draws = uniforms_np(seed, tick, uids)
        over = np.maximum(p_side - reservation, 0.0)
        shrink = np.maximum(1.0 - sensitivity * over, 0.0)
        decided = (
            (draws < lam)
            & ((reservation - p_side) / p_side >= margin)
            & (dist <= base_radius * shrink)
        )
        for i in np.nonzero(decided)[0]:
            i = int(i)
            if yes_mask[i]:
                paid = lmsr.cost(q_yes + 1.0, q_no, b) - lmsr.cost(q_yes, q_no, b)
            else:
                paid = lmsr.cost(q_yes, q_no + 1.0, b) - lmsr.cost(q_yes, q_no, b)
            if paid > cash[i]:
                continue
            cash[i] -= paid
            holdings[i] += 1
            trade_counts[i] += 1
            if yes_mask[i]:
                q_yes += 1.0
            else:
                q_no += 1.0
            out_tick[used] = tick
            out_agent[used] = i
            out_cost[used] = paid
            out_price[used] = lmsr.price_yes(q_yes, q_no, b)
            used += 1
        tick += 1
    return used, tick, q_yes, q_no


if HAVE_NUMBA:
    _U11 = np.uint64(11)
    _U27 = np.uint64(27)
    _U30 = np.uint64(30)
    _U31 = np.uint64(31)
    _GAMMA_U = np.uint64(GAMMA)
    _M1_U = np.uint64(0xBF58476D1CE4E5B9)
    _M2_U = np.uint64(0x94D049BB133111EB)

    _price_yes_nb = njit(cache=True)(lmsr.price_yes)
    _cost_nb = njit(cache=True)(lmsr.cost)

    @njit(cache=True)
    def _mix64_nb(x):
        z = x + _GAMMA_U
        z = (z ^ (z >> _U30)) * _M1_U
        z = (z ^ (z >> _U27)) * _M2_U
        return z ^ (z >> _U31)

    @njit(cache=True)
    def _uniform_nb(seed, tick, uid):
        base = _mix64_nb(seed ^ _mix64_nb(np.uint64(tick + 1)))
        h = _mix64_nb(base + uid * _GAMMA_U)
        return np.float64(h >> _U11) * _INV53

    @njit(cache=True)
    def _run_span_nb(
        tick_start,
        tick_end,
        q_yes,
        q_no,
        b,
        lam,
        margin,
        seed,
        dist,
        side_yes,
        base_radius,
        reservation,
        sensitivity,
        uids,
        cash,
        holdings,
        trade_counts,
        out_tick,
        out_agent,
        out_cost,
        out_price,
    ):
        n = dist.shape[0]
        cap = out_tick.shape[0]
        used = 0
        tick = tick_start
        while tick < tick_end:
            if cap - used < n:
                break
            p_yes = _price_yes_nb(q_yes, q_no, b)
            base = _mix64_nb(seed ^ _mix64_nb(np.uint64(tick + 1)))
            for i in range(n):
                if side_yes[i] == 1:
                    p_side = p_yes
                else:
                    p_side = 1.0 - p_yes
                h = _mix64_nb(base + uids[i] * _GAMMA_U)
                draw = np.float64(h >> _U11) * _INV53
                if draw >= lam:
                    continue
                if (reservation[i] - p_side) / p_side < margin:
                    continue
                over = p_side - reservation[i]
                if over < 0.0:
                    over = 0.0
                shrink = 1.0 - sensitivity[i] * over
                if shrink < 0.0:
                    shrink = 0.0
                if dist[i] > base_radius[i] * shrink:
                    continue
                if side_yes[i] == 1:
                    paid = _cost_nb(q_yes + 1.0, q_no, b) - _cost_nb(q_yes, q_no, b)
                else:
                    paid = _cost_nb(q_yes, q_no + 1.0, b) - _cost_nb(q_yes, q_no, b)
                if paid > cash[i]:
                    continue
                cash[i] -= paid
                holdings[i] += 1
                trade_counts[i] += 1
                if side_yes[i] == 1:
                    q_yes += 1.0
                else:
                    q_no += 1.0
                out_tick[used] = tick
                out_agent[used] = i
                out_cost[used] = paid
                out_price[used] = _price_yes_nb(q_yes, q_no, b)
                used += 1
            tick += 1
        return used, tick, q_yes, q_no


def run_span(
    tick_start: int,
    tick_end: int,
    q_yes: float,
    q_no: float,
    b: float,
    lam: float,
    margin: float,
    seed: int,
    dist: np.ndarray,
    side_yes: np.ndarray,
    base_radius: np.ndarray,
    reservation: np.ndarray,
    sensitivity: np.ndarray,
    uids: np.ndarray,
    cash: np.ndarray,
    holdings: np.ndarray,
    trade_counts: np.ndarray,
    out_tick: np.ndarray,
    out_agent: np.ndarray,
    out_cost: np.ndarray,
    out_price: np.ndarray,
    backend: str | None = None,
):
    """Advance the agent phase over ticks [tick_start, tick_end).

    Mutates cash/holdings/trade_counts in place and appends executed
    trades to the out_* buffers. Returns (trades_written, next_tick,
    q_yes, q_no); next_tick < tick_end means the buffers filled and the
    caller should drain them and call again.
    """
    if backend is None:
        backend = default_backend()
    if out_tick.shape[0] < dist.shape[0]:
        raise ConfigError("trade buffer smaller than the agent population")
    if backend == "numba":
        if not HAVE_NUMBA:
            raise ConfigError("numba backend requested but numba is not importable")
        return _run_span_nb(
            tick_start,
            tick_end,
            q_yes,
            q_no,
            b,
            lam,
            margin,
            np.uint64(seed),
            dist,
            side_yes,
            base_radius,
            reservation,
            sensitivity,
            uids,
            cash,
            holdings,
            trade_counts,
            out_tick,
            out_agent,
            out_cost,
            out_price,
        )
    if backend == "numpy":
        return _run_span_numpy(
            tick_start,
            tick_end,
            q_yes,
            q_no,
            b,
            lam,
            margin,
            seed,
            dist,
            side_yes,
            base_radius,
            reservation,
            sensitivity,
            uids,
            cash,
            holdings,
            trade_counts,
            out_tick,
            out_agent,
            out_cost,
            out_price,
        )
    raise ConfigError(f"unknown backend {backend!r}")


def warmup(backend: str | None = None) -> str:
    """Trigger JIT compilation on a one-agent toy span so timing-critical
    callers pay compile cost up front. Returns the backend used."""
    if backend is None:
        backend = default_backend()
    n = 1
    run_span(
        0,
        2,
        0.0,
        0.0,
        10.0,
        1.0,
        0.0,
        12345,
        np.zeros(n),
        np.ones(n, dtype=np.int8),
        np.ones(n),
        np.full(n, 0.6),
        np.ones(n),
        np.arange(n, dtype=np.uint64),
        np.full(n, 100.0),
        np.zeros(n, dtype=np.int64),
        np.zeros(n, dtype=np.int64),
        np.zeros(16, dtype=np.int64),
        np.zeros(16, dtype=np.int64),
        np.zeros(16, dtype=np.float64),
        np.zeros(16, dtype=np.float64),
        backend=backend,
    )
    return backend
