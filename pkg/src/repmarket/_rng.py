"""Deterministic keyed randomness for agent participation draws.

Replay and cross-backend parity require every stochastic decision to be
reproducible from a seed alone. Instead of a sequential generator, draws
are addressed by key: uniform(seed, tick, uid) is a pure function built
on the splitmix64 finalizer, so the value an agent sees at a given tick
does not depend on evaluation order, chunking, or backend. The same
integer recipe is implemented three times (python ints, numpy uint64
vectors, and an njit scalar inside the kernels) and parity is asserted
in tests.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
# top 53 bits of a 64-bit hash map onto [0, 1)
_INV53 = 1.0 / (1 << 53)


def mix64(x: int) -> int:
    """splitmix64 finalizer of a 64-bit integer (python-int arithmetic)."""
    z = (x + GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def combine(*parts: int) -> int:
    """Fold integers into a single 64-bit key, order sensitive."""
    h = 0
    for p in parts:
        h = mix64(h ^ (p & MASK64))
    return h


def fnv1a64(s: str) -> int:
    """Stable 64-bit string hash (FNV-1a); claim ids must hash the same in
    every process, which rules out the builtin salted hash()."""
    h = 0xCBF29CE484222325
    for byte in s.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & MASK64
    return h


def derive_seed(*parts: int | str) -> int:
    """Build a sub-stream seed from mixed integer/string labels."""
    ints = [fnv1a64(p) if isinstance(p, str) else int(p) for p in parts]
    return combine(*ints)


def tick_base(seed: int, tick: int) -> int:
    """Per-tick base key; agent draws fan out from this with their uid."""
    return mix64((seed ^ mix64(tick + 1)) & MASK64)


def uniform(seed: int, tick: int, uid: int) -> float:
    """Uniform draw in [0, 1) addressed by (seed, tick, uid)."""
    base = tick_base(seed, tick)
    h = mix64((base + uid * GAMMA) & MASK64)
    return (h >> 11) * _INV53


def normal(seed: int, tick: int, uid: int) -> float:
    """Standard normal draw addressed by (seed, tick, uid), Box-Muller
    over two keyed uniforms. Used for genome jitter, where draws must
    not depend on iteration order."""
    u1 = 1.0 - uniform(seed, tick, 2 * uid)
    u2 = uniform(seed, tick, 2 * uid + 1)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def mix64_np(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer over a uint64 array (wrapping arithmetic)."""
    z = (z + np.uint64(GAMMA)).astype(np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def uniforms_np(seed: int, tick: int, uids: np.ndarray) -> np.ndarray:
    """Vectorized uniform(seed, tick, uid) over a uint64 uid array."""
    base = np.uint64(tick_base(seed, tick))
    h = mix64_np(base + uids * np.uint64(GAMMA))
    return (h >> np.uint64(11)).astype(np.float64) * _INV53
