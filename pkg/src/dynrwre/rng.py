"""Deterministic coordinate-keyed randomness.

Every random quantity consumed by a simulation is a pure function of
(master seed, stream label, integer coordinates, draw index).  There is no
generator state: replicas, coupled processes and lazily evaluated pieces of
one realization can be computed in any order, on any number of workers, and
always agree.  Uniforms are built from the top 53 bits of a mixed 64-bit
word, so they are exactly representable doubles in [0, 1).
"""

from __future__ import annotations

import enum
import math
from typing import Iterator, NamedTuple

import numpy as np

MASK64 = (1 << 64) - 1

_GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB
_INV53 = 2.0 ** -53


class StreamTag(enum.IntEnum):
    """Independent randomness streams of one experiment."""

    SITE_UNIFORM = 1
    INIT_OCCUPANCY = 2
    EDGE_CLOCK = 3
    PARTICLE_STEP = 4
    WALKER_UNIFORM = 5


class StreamLabel(NamedTuple):
    tag: StreamTag
    replica: int = 0


class Coord(NamedTuple):
    """Integer lattice coordinate of a draw (site/edge/particle id, time/index)."""

    x: int
    t: int


def mix(seed: int, tag: int, replica: int, x: int, t: int, idx: int) -> int:
    """Mix the six stream coordinates into one 64-bit word.

    SplitMix64-style finalizer applied once per absorbed word; full avalanche,
    not cryptographic.
    """
    h = seed & MASK64
    for w in (tag, replica, x, t, idx):
        h = ((h ^ (w & MASK64)) + _GOLDEN) & MASK64
        h = ((h ^ (h >> 30)) * _MIX_A) & MASK64
        h = ((h ^ (h >> 27)) * _MIX_B) & MASK64
        h = h ^ (h >> 31)
    return h


def _mix_np(h: np.ndarray, w: np.ndarray) -> np.ndarray:
    # wrap-around on uint64 is intended here
    with np.errstate(over="ignore"):
        h = (h ^ w) + np.uint64(_GOLDEN)
        h = (h ^ (h >> np.uint64(30))) * np.uint64(_MIX_A)
        h = (h ^ (h >> np.uint64(27))) * np.uint64(_MIX_B)
        return h ^ (h >> np.uint64(31))


def mix_array(seed: int, tag: int, replica, x, t, idx) -> np.ndarray:
    """Vectorized `mix`; scalar or array inputs broadcast. Returns uint64."""
    h = np.asarray(np.uint64(seed & MASK64))
    for w in (tag, replica, x, t, idx):
        w64 = np.asarray(w, dtype=np.int64).astype(np.uint64)
        h = _mix_np(h, w64)
    return h


def _check_label(label: StreamLabel, coord: Coord) -> None:
    if label.tag == StreamTag.WALKER_UNIFORM and (coord.x + coord.t) % 2 != 0:
        raise ValueError(
            f"walker uniforms live on the even space-time lattice: ({coord.x}, {coord.t})"
        )


def uniform(seed: int, label: StreamLabel, coord: Coord, idx: int = 0) -> float:
    """Deterministic U[0,1) draw for one stream coordinate."""
    _check_label(label, coord)
    return (mix(seed, label.tag, label.replica, coord.x, coord.t, idx) >> 11) * _INV53


def uniform_array(seed: int, label: StreamLabel, x, t, idx=0) -> np.ndarray:
    """Vectorized uniforms, same values as `uniform` at each coordinate."""
    h = mix_array(seed, label.tag, label.replica, x, t, idx)
    return (h >> np.uint64(11)).astype(np.float64) * _INV53


def walker_uniform(seed: int, replica: int, x: int, n: int) -> float:
    """Hot-path uniform for walker steps; coordinates must satisfy x = n mod 2."""
    return (mix(seed, StreamTag.WALKER_UNIFORM, replica, x, n, 0) >> 11) * _INV53


def exp_gap(u: float, rate: float) -> float:
    """Exponential(rate) gap through the inverse CDF, monotone in u."""
    return -math.log1p(-u) / rate


def exp_gaps_array(seed: int, label: StreamLabel, coord: Coord, rate: float,
                   start_idx: int, count: int) -> np.ndarray:
    """Gaps number start_idx..start_idx+count-1 of the exp_stream, vectorized."""
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate}")
    idx = np.arange(start_idx, start_idx + count, dtype=np.int64)
    u = uniform_array(seed, label, coord.x, coord.t, idx)
    return -np.log1p(-u) / rate


def exp_stream(seed: int, label: StreamLabel, coord: Coord, rate: float) -> Iterator[float]:
    """Increasing event times of a Poisson process with the given rate.

    The underlying uniforms depend only on (seed, label, coord); changing the
    rate rescales the same event skeleton, so clocks stay shared across
    coupled processes.
    """
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate}")
    _check_label(label, coord)
    t = 0.0
    idx = 0
    while True:
        u = uniform(seed, label, coord, idx)
        t += exp_gap(u, rate)
        idx += 1
        yield t


def poisson(seed: int, label: StreamLabel, coord: Coord, mean: float) -> int:
    """Poisson(mean) draw realized as a level set of a unit-rate gap stack.

    For fixed coordinates the value is non-decreasing in `mean`, which is the
    coupling that makes site counts sitewise comparable across densities.
    """
    if mean < 0:
        raise ValueError(f"mean must be non-negative, got {mean}")
    if mean == 0:
        return 0
    total = 0.0
    n = 0
    while True:
        u = uniform(seed, label, coord, n)
        total += exp_gap(u, 1.0)
        if total > mean:
            return n
        n += 1


def poisson_array(seed: int, label: StreamLabel, xs: np.ndarray, t: int, mean: float) -> np.ndarray:
    """Vectorized `poisson` over sites xs (shared t coordinate)."""
    if mean < 0:
        raise ValueError(f"mean must be non-negative, got {mean}")
    xs = np.asarray(xs, dtype=np.int64)
    out = np.zeros(len(xs), dtype=np.int64)
    if mean == 0:
        return out
    # enough columns that spilling past them is rare; stragglers finish scalar
    k = int(mean + 10.0 * math.sqrt(mean) + 16)
    idx = np.arange(k, dtype=np.int64)
    u = uniform_array(seed, label, xs[:, None], t, idx[None, :])
    totals = np.cumsum(-np.log1p(-u), axis=1)
    out = (totals <= mean).sum(axis=1).astype(np.int64)
    undecided = totals[:, -1] <= mean
    for i in np.nonzero(undecided)[0]:
        out[i] = poisson(seed, label, Coord(int(xs[i]), t), mean)
    return out
