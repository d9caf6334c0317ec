"""Dynamic particle environments on a ring window.

Two conservative particle systems in equilibrium, realized as deterministic
functions of the coordinate-keyed randomness in :mod:`dynrwre.rng`:

* exclusion dynamics (``Ssep``): 0/1 occupancies, neighbouring sites swap
  their contents at the arrivals of per-edge exponential clocks of rate gamma;
* a cloud of independent lazy walkers (``Pcrw``): Poisson(lambda) particles
  per site, lambda = -ln(1-rho), each jumping -1/0/+1 at every integer time
  with probabilities (1-q)/2, q, (1-q)/2.

The module exposes two layers over the same randomness:

* a snapshot layer (`sample_equilibrium` / `evolve` / `query`) holding the
  whole window in memory, evolved event by event;
* a lazy query layer (`open_env`) answering single occupancy queries
  ``eta_t(x)``.  For the exclusion process this traces the value at (x, t)
  backward through the swap events to its time-0 origin, caching everything
  resolved along the way, so co-simulating a walker costs O(1)-ish per step
  instead of O(ring) per unit time.  Both layers agree exactly.

Sites are keyed by their signed ring representative in [-M/2, M/2), so
enlarging the ring does not reshuffle the randomness of the common window.
"""

from __future__ import annotations

import heapq
import json
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .rng import (
    Coord,
    StreamLabel,
    StreamTag,
    exp_gaps_array,
    exp_stream,
    mix,
    poisson_array,
    uniform_array,
)


class WindowError(ValueError):
    """Query or walk left the declared validity region of the ring window."""


@dataclass(frozen=True)
class Ssep:
    gamma: float = 1.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class Pcrw:
    q: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must be in (0,1), got {self.q}")


EnvKind = Union[Ssep, Pcrw]


def margin(horizon: float, rate: float, factor: float = 6.0) -> float:
    """Safety margin between the walker's reach and the ring seam.

    Heuristic: `factor` diffusive standard deviations plus a constant floor.
    Exposed as a knob; the acceptance suite re-runs one experiment with the
    factor doubled and checks the estimates are stable.
    """
    return factor * math.sqrt(max(rate, 1.0) * horizon) + 64.0


def default_ring_size(kind: EnvKind, horizon: float, margin_factor: float = 6.0) -> int:
    rate = kind.gamma if isinstance(kind, Ssep) else 1.0
    m = 2 * math.ceil(horizon + margin(horizon, rate, margin_factor))
    return m + (m % 2)


@dataclass(frozen=True)
class EnvConfig:
    kind: EnvKind
    rho: float
    horizon: float
    seed: int
    replica: int = 0
    ring_size: Optional[int] = None
    margin_factor: float = 6.0

    def __post_init__(self):
        if isinstance(self.kind, Ssep):
            if not 0.0 < self.rho <= 1.0:
                raise ValueError(f"rho must be in (0,1] for exclusion, got {self.rho}")
        else:
            if not 0.0 < self.rho < 1.0:
                raise ValueError(f"rho must be in (0,1) for the walker cloud, got {self.rho}")
        if self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.ring_size is None:
            object.__setattr__(
                self, "ring_size", default_ring_size(self.kind, self.horizon, self.margin_factor)
            )
        else:
            if self.ring_size % 2 != 0:
                raise ValueError(f"ring size must be even, got {self.ring_size}")
            if self.ring_size < 2 * self.horizon + 8:
                raise ValueError(
                    f"ring size {self.ring_size} cannot contain the light cone of "
                    f"horizon {self.horizon}"
                )

    @property
    def lam(self) -> float:
        """Mean particles per site; equals rho for exclusion, -ln(1-rho) for the cloud."""
        if isinstance(self.kind, Ssep):
            return self.rho
        return -math.log(1.0 - self.rho)

    def valid_halfwidth(self) -> int:
        return self.ring_size // 2 - 1


def _site_rep(z: int, m: int) -> int:
    half = m // 2
    return (z + half) % m - half


# ---------------------------------------------------------------------------
# snapshot layer


@dataclass
class EnvState:
    """Occupancy of the whole ring window at one instant.

    `occupancy[i]` is the count at site `lo + i`.  For the particle cloud the
    identities needed to evolve further are carried along (a particle is a
    pair (origin site, index in its site's initial stack), and its trajectory
    never changes when particles are added elsewhere).
    """

    occupancy: np.ndarray
    time: float
    lo: int
    particles: Optional[tuple] = field(default=None, repr=False)

    def total(self) -> int:
        return int(self.occupancy.sum())


def sample_equilibrium(config: EnvConfig) -> EnvState:
    """Draw the time-0 window from the invariant product measure."""
    m = config.ring_size
    lo = -(m // 2)
    sites = np.arange(lo, lo + m, dtype=np.int64)
    init = StreamLabel(StreamTag.INIT_OCCUPANCY, config.replica)
    if isinstance(config.kind, Ssep):
        u = uniform_array(config.seed, init, sites, 0, 0)
        occ = (u <= config.rho).astype(np.int64)
        return EnvState(occupancy=occ, time=0.0, lo=lo)
    counts = poisson_array(config.seed, init, sites, 0, config.lam)
    origins = np.repeat(sites, counts)
    starts = np.cumsum(counts) - counts
    stack_idx = np.arange(len(origins), dtype=np.int64) - np.repeat(starts, counts)
    return EnvState(
        occupancy=counts,
        time=0.0,
        lo=lo,
        particles=(origins, stack_idx, origins.copy()),
    )


def _pcrw_step_positions(config: EnvConfig, origins, stack_idx, pos, n: int):
    """Positions after the jump at integer time n (ring-wrapped)."""
    label = StreamLabel(StreamTag.PARTICLE_STEP, config.replica)
    u = uniform_array(config.seed, label, origins, stack_idx, n)
    q = config.kind.q
    delta = np.where(u < (1.0 - q) / 2.0, -1, np.where(u < (1.0 + q) / 2.0, 0, 1))
    m = config.ring_size
    half = m // 2
    return (pos + delta + half) % m - half


def evolve(state: EnvState, config: EnvConfig, to_time: float) -> EnvState:
    """Advance a snapshot, applying every event in (state.time, to_time]."""
    if to_time < state.time:
        raise ValueError(f"cannot evolve backward: {state.time} -> {to_time}")
    m = config.ring_size
    lo = state.lo
    if isinstance(config.kind, Ssep):
        occ = state.occupancy.copy()
        if config.rho == 1.0:
            return EnvState(occupancy=occ, time=to_time, lo=lo)
        gamma = config.kind.gamma
        label = StreamLabel(StreamTag.EDGE_CLOCK, config.replica)
        heap = []
        for e in range(lo, lo + m):
            stream = exp_stream(config.seed, label, Coord(e, 0), gamma)
            t = next(stream)
            while t <= state.time:
                t = next(stream)
            if t <= to_time:
                heap.append((t, e, stream))
        heapq.heapify(heap)
        while heap:
            t, e, stream = heapq.heappop(heap)
            i = e - lo
            j = (e + 1 - lo) % m
            occ[i], occ[j] = occ[j], occ[i]
            t_next = next(stream)
            if t_next <= to_time:
                heapq.heappush(heap, (t_next, e, stream))
        return EnvState(occupancy=occ, time=to_time, lo=lo)
    if state.particles is None:
        raise ValueError("particle-cloud snapshot lost its particle identities")
    origins, stack_idx, pos = state.particles
    pos = pos.copy()
    for n in range(math.floor(state.time) + 1, math.floor(to_time) + 1):
        pos = _pcrw_step_positions(config, origins, stack_idx, pos, n)
    occ = np.bincount(pos - lo, minlength=m).astype(np.int64)
    return EnvState(occupancy=occ, time=to_time, lo=lo, particles=(origins, stack_idx, pos))


def query(state: EnvState, x: int) -> int:
    """Occupancy eta_t(x) of the snapshot; errors outside the window."""
    i = x - state.lo
    if not 0 <= i < len(state.occupancy):
        raise WindowError(f"site {x} outside window [{state.lo}, {state.lo + len(state.occupancy)})")
    return int(state.occupancy[i])


def dump_snapshot(state: EnvState, config: EnvConfig, csv_path, json_path=None) -> None:
    """Write `site,count` rows plus a JSON sidecar describing the realization."""
    with open(csv_path, "w") as f:
        f.write("site,count\n")
        for i, c in enumerate(state.occupancy):
            f.write(f"{state.lo + i},{int(c)}\n")
    if json_path is not None:
        kind = config.kind
        meta = {
            "seed": config.seed,
            "replica": config.replica,
            "kind": "ssep" if isinstance(kind, Ssep) else "pcrw",
            "rho": config.rho,
            ("gamma" if isinstance(kind, Ssep) else "q"): (
                kind.gamma if isinstance(kind, Ssep) else kind.q
            ),
            "M": config.ring_size,
            "time": state.time,
        }
        with open(json_path, "w") as f:
            json.dump(meta, f, indent=2)
            f.write("\n")


# ---------------------------------------------------------------------------
# lazy query layer


class SsepEnv:
    """Exclusion process answering occupancy queries by exact backward tracing.

    The value sitting at (x, t) entered the window at time 0 somewhere and was
    carried to (x, t) by swap events; running the adjacent-edge events
    backward from (x, t) finds that origin.  Cache keys are (site, time of the
    last adjacent event), one per constancy interval: traces of the same
    underlying value always terminate on each other's history, so re-reading
    values the process has shown before is cheap.  This engine is the
    reference implementation; bulk streaming access patterns are served by
    :class:`dynrwre.window.SsepWindow`, which it cross-validates.
    """

    def __init__(self, config: EnvConfig):
        if not isinstance(config.kind, Ssep):
            raise TypeError("SsepEnv requires an exclusion kind")
        self.config = config
        self.m = config.ring_size
        self.half = self.m // 2
        self.gamma = config.kind.gamma
        self.rho = config.rho
        self._edge_label = StreamLabel(StreamTag.EDGE_CLOCK, config.replica)
        self._edges: dict[int, list] = {}
        self._cache: dict[tuple, int] = {}
        self.valid_halfwidth = config.valid_halfwidth()
        self.max_time = config.horizon + 4.0

    # -- event streams ------------------------------------------------------

    def _events(self, e: int, tau: float) -> list:
        """Sorted event times on the (ring-repped) edge e, generated past tau."""
        lst = self._edges.get(e)
        if lst is None:
            lst = []
            self._edges[e] = lst
        last = lst[-1] if lst else 0.0
        while last <= tau:
            count = max(16, int(self.gamma * (tau - last) * 1.5) + 8)
            gaps = exp_gaps_array(
                self.config.seed, self._edge_label, Coord(e, 0), self.gamma, len(lst), count
            )
            run = last + np.cumsum(gaps)
            lst.extend(run.tolist())
            last = lst[-1]
        return lst

    def _init_value(self, z: int) -> int:
        u = (mix(self.config.seed, StreamTag.INIT_OCCUPANCY, self.config.replica, z, 0, 0) >> 11) * 2.0 ** -53
        return 1 if u <= self.rho else 0

    # -- backward trace -----------------------------------------------------

    def _trace(self, x: int, t: float, inclusive: bool) -> int:
        cache = self._cache
        edges = self._edges
        half = self.half
        m = self.m
        z = (x + half) % m - half
        tau = float(t)
        pend = []
        val = None
        while True:
            e_l = (z - 1 + half) % m - half
            left = edges.get(e_l)
            if left is None or left[-1] <= tau:
                left = self._events(e_l, tau)
            right = edges.get(z)
            if right is None or right[-1] <= tau:
                right = self._events(z, tau)
            if inclusive:
                i_l = bisect_right(left, tau)
                i_r = bisect_right(right, tau)
                inclusive = False
            else:
                i_l = bisect_left(left, tau)
                i_r = bisect_left(right, tau)
            t_l = left[i_l - 1] if i_l else -1.0
            t_r = right[i_r - 1] if i_r else -1.0
            # the value at z is constant on (te, tau]
            te = t_l if t_l >= t_r else t_r
            key = (z, te)
            val = cache.get(key)
            if val is not None:
                break
            pend.append(key)
            if te < 0.0:
                val = self._init_value(z)
                break
            z = (z + (-1 if t_l >= t_r else 1) + half) % m - half
            tau = te
        for key in pend:
            cache[key] = val
        return val

    # -- public queries -----------------------------------------------------

    def count_at(self, x: int, t: float) -> int:
        if abs(x) > self.valid_halfwidth:
            raise WindowError(f"site {x} outside validity half-width {self.valid_halfwidth}")
        if t < 0 or t > self.max_time:
            raise WindowError(f"time {t} outside [0, {self.max_time}]")
        if self.rho == 1.0:
            return 1
        return self._trace(x, t, True)

    def counts_at(self, xs, t: float):
        return [self.count_at(int(x), t) for x in xs]


class ConstEnv:
    """Degenerate all-occupied window (exclusion at rho = 1); exact oracle."""

    def __init__(self, config: EnvConfig):
        self.config = config
        self.valid_halfwidth = config.valid_halfwidth()
        self.max_time = config.horizon + 4.0

    def count_at(self, x: int, t: float) -> int:
        if abs(x) > self.valid_halfwidth:
            raise WindowError(f"site {x} outside validity half-width {self.valid_halfwidth}")
        return 1

    def counts_at(self, xs, t: float):
        return [self.count_at(int(x), t) for x in xs]


class PcrwEnv:
    """Walker cloud evolved synchronously; queries at time t see the post-jump
    configuration (jumps happen at integer instants)."""

    def __init__(self, config: EnvConfig):
        if not isinstance(config.kind, Pcrw):
            raise TypeError("PcrwEnv requires a walker-cloud kind")
        self.config = config
        self.m = config.ring_size
        self.half = self.m // 2
        self.valid_halfwidth = config.valid_halfwidth()
        self.max_time = config.horizon + 4.0
        state = sample_equilibrium(config)
        self._origins, self._stack_idx, self._pos0 = state.particles
        self._pos = self._pos0.copy()
        self.time = 0
        self._counts = np.bincount(self._pos + self.half, minlength=self.m)

    def _advance_to(self, n: int) -> None:
        if n < self.time:
            self._pos = self._pos0.copy()
            self.time = 0
        pos = self._pos
        for step in range(self.time + 1, n + 1):
            pos = _pcrw_step_positions(self.config, self._origins, self._stack_idx, pos, step)
        self._pos = pos
        self.time = n
        self._counts = np.bincount(pos + self.half, minlength=self.m)

    def count_at(self, x: int, t: float) -> int:
        if abs(x) > self.valid_halfwidth:
            raise WindowError(f"site {x} outside validity half-width {self.valid_halfwidth}")
        if t < 0 or t > self.max_time:
            raise WindowError(f"time {t} outside [0, {self.max_time}]")
        n = math.floor(t)
        if n != self.time:
            self._advance_to(n)
        return int(self._counts[_site_rep(x, self.m) + self.half])

    def counts_at(self, xs, t: float):
        if len(xs) == 0:
            return []
        n = math.floor(t)
        if n != self.time:
            self._advance_to(n)
        xs = np.asarray(xs, dtype=np.int64)
        if np.abs(xs).max() > self.valid_halfwidth:
            raise WindowError("site batch leaves the validity region")
        idx = (xs + self.half) % self.m
        return self._counts[idx].tolist()


LazyEnv = Union[SsepEnv, PcrwEnv, ConstEnv]


def open_env(config: EnvConfig) -> LazyEnv:
    """Open a lazily-evaluated environment for occupancy queries."""
    if isinstance(config.kind, Ssep):
        if config.rho == 1.0:
            return ConstEnv(config)
        return SsepEnv(config)
    return PcrwEnv(config)


def couple(config_lo: EnvConfig, config_hi: EnvConfig) -> tuple[LazyEnv, LazyEnv]:
    """Open two environments sharing every piece of dynamics randomness.

    Requires equal kind, ring, seed and replica; then sitewise domination
    eta_lo(x,t) <= eta_hi(x,t) holds exactly at every queried point, because
    the initial draws are thresholded/stacked from the same uniforms and the
    dynamics either swaps both configurations with the same clocks (exclusion)
    or only ever adds particles with their own fixed trajectories (cloud).
    """
    if type(config_lo.kind) is not type(config_hi.kind) or config_lo.kind != config_hi.kind:
        raise ValueError("coupled environments must share their kind and its parameters")
    for attr in ("ring_size", "seed", "replica", "horizon"):
        if getattr(config_lo, attr) != getattr(config_hi, attr):
            raise ValueError(f"coupled environments must agree on {attr}")
    if config_lo.rho > config_hi.rho:
        raise ValueError("couple() expects rho_lo <= rho_hi")
    return open_env(config_lo), open_env(config_hi)


def with_replica(config: EnvConfig, replica: int) -> EnvConfig:
    return replace(config, replica=replica)
