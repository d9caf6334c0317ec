"""Streaming exclusion-process window for bulk forward access.

`SsepWindow` keeps an interval of sites exact at an integer time and advances
it unit by unit through the swap events, using the compiled kernel when numba
is importable and a pure-python twin otherwise.  Values swapping in across
the window boundary are unknowable and are tracked exactly as poison marks;
the window is sized with the standard diffusive margin so queried sites stay
clean, and a query that does hit poison raises rather than guessing.

This is the workhorse behind walker co-evolution, displacement fronts and
box/strip observables; the backward-tracing `SsepEnv` is the reference
engine it is tested against.
"""

from __future__ import annotations

import math

import numpy as np

from .environment import EnvConfig, Ssep, WindowError, margin
from .rng import StreamLabel, StreamTag, uniform_array

try:
    from . import _kernels

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _kernels = None
    HAVE_NUMBA = False

POISON = 2


class PoisonError(WindowError):
    """A queried site's value was contaminated by boundary uncertainty."""


def _advance_units_py(occ, nxt, cnt, edge0, time0, n_units, nslab,
                      gamma, seed, replica, edge_tag, uniform_scalar):
    """Pure-python twin of the compiled kernel, same floats, same order."""
    n_edges = len(nxt)
    w = len(occ)
    inv_gamma = 1.0 / gamma
    for unit in range(n_units):
        base = float(time0 + unit)
        for s in range(nslab):
            b = base + (s + 1) / nslab
            j = 0
            while j < n_edges:
                if nxt[j] > b:
                    j += 1
                    continue
                events = []
                k = j
                while k < n_edges and nxt[k] <= b:
                    while nxt[k] <= b:
                        events.append((nxt[k], k))
                        cnt[k] += 1
                        u = uniform_scalar(seed, edge_tag, replica, edge0 + k, 0, cnt[k])
                        nxt[k] += -math.log1p(-u) * inv_gamma
                    k += 1
                events.sort()
                for _, e in events:
                    if e == 0:
                        occ[0] = POISON
                    elif e == n_edges - 1:
                        occ[w - 1] = POISON
                    else:
                        occ[e - 1], occ[e] = occ[e], occ[e - 1]
                j = k + 1
    return 0


class SsepWindow:
    """Exact occupancy of sites [x_lo, x_hi] streamed forward in time.

    Reads are restricted to integer times, never earlier than the current
    one.  `x_lo`/`x_hi` describe the sites the caller will query; the window
    itself is padded by the config's diffusive margin for the requested time
    depth so that boundary poison cannot reach a queried site except with
    negligible probability (in which case `PoisonError` is raised and the
    caller may retry with a larger pad).
    """

    def __init__(self, config: EnvConfig, x_lo: int, x_hi: int,
                 depth: float | None = None, pad: float | None = None,
                 nslab: int | None = None):
        if not isinstance(config.kind, Ssep):
            raise TypeError("SsepWindow requires an exclusion kind")
        if x_hi < x_lo:
            raise ValueError("empty site range")
        self.config = config
        self.gamma = config.kind.gamma
        self.rho = config.rho
        depth = config.horizon if depth is None else depth
        if pad is None:
            pad = margin(depth, self.gamma, config.margin_factor)
        lo = int(math.floor(x_lo - pad))
        hi = int(math.ceil(x_hi + pad))
        vh = config.valid_halfwidth()
        if lo < -vh or hi > vh:
            raise WindowError(
                f"window [{lo}, {hi}] exceeds the ring validity half-width {vh}"
            )
        self.lo = lo
        self.hi = hi
        self.time = 0
        self.max_time = math.floor(depth) + 4
        w = hi - lo + 1
        seed, rep = config.seed, config.replica
        init = StreamLabel(StreamTag.INIT_OCCUPANCY, rep)
        sites = np.arange(lo, hi + 1, dtype=np.int64)
        if self.rho == 1.0:
            self.occ = np.ones(w, dtype=np.int8)
        else:
            self.occ = (uniform_array(seed, init, sites, 0, 0) <= self.rho).astype(np.int8)
        edges = np.arange(lo - 1, hi + 1, dtype=np.int64)
        clock = StreamLabel(StreamTag.EDGE_CLOCK, rep)
        u0 = uniform_array(seed, clock, edges, 0, 0)
        self.nxt = -np.log1p(-u0) / self.gamma
        self.cnt = np.zeros(w + 1, dtype=np.int64)
        self.nslab = max(1, int(math.ceil(self.gamma))) if nslab is None else nslab
        cap = 8 * (w + 1) + 64
        self._buf_t = np.empty(cap, dtype=np.float64)
        self._buf_e = np.empty(cap, dtype=np.int64)
        if HAVE_NUMBA:
            self.h_edge = _kernels.edge_prefix(
                np.uint64(seed), int(StreamTag.EDGE_CLOCK), rep, lo - 1, w + 1
            )
        else:
            self.h_edge = None

    def _advance(self, n_units: int) -> None:
        if self.rho == 1.0:
            self.time += n_units
            return
        if HAVE_NUMBA:
            rc = _kernels.advance_units(
                self.occ, self.nxt, self.cnt, self.h_edge, self.time, n_units,
                self.nslab, self.gamma, self._buf_t, self._buf_e)
        else:
            occ = self.occ.tolist()
            nxt = self.nxt.tolist()
            cnt = self.cnt.tolist()
            rc = _advance_units_py(occ, nxt, cnt, self.lo - 1, self.time, n_units,
                                   self.nslab, self.gamma, self.config.seed,
                                   self.config.replica, int(StreamTag.EDGE_CLOCK),
                                   _uniform_scalar)
            self.occ = np.asarray(occ, dtype=np.int8)
            self.nxt = np.asarray(nxt, dtype=np.float64)
            self.cnt = np.asarray(cnt, dtype=np.int64)
        if rc != 0:
            raise WindowError("event slab overflowed; retry with a denser slab grid")
        self.time += n_units

    def advance_to(self, n: int) -> None:
        if n < self.time:
            raise WindowError(f"window streams forward only: at {self.time}, asked {n}")
        if n > self.max_time:
            raise WindowError(f"time {n} beyond window depth {self.max_time}")
        if n > self.time:
            self._advance(n - self.time)

    def count_at(self, x: int, t) -> int:
        n = int(t)
        if n != t:
            raise WindowError("window reads are at integer times")
        self.advance_to(n)
        if not self.lo <= x <= self.hi:
            raise WindowError(f"site {x} outside window [{self.lo}, {self.hi}]")
        v = int(self.occ[x - self.lo])
        if v == POISON:
            raise PoisonError(f"site {x} at time {n} is poisoned; widen the pad")
        return v

    def counts_at(self, xs, t) -> list:
        n = int(t)
        if n != t:
            raise WindowError("window reads are at integer times")
        self.advance_to(n)
        out = []
        lo, hi, occ = self.lo, self.hi, self.occ
        for x in xs:
            if not lo <= x <= hi:
                raise WindowError(f"site {x} outside window [{lo}, {hi}]")
            v = int(occ[x - lo])
            if v == POISON:
                raise PoisonError(f"site {x} at time {n} is poisoned; widen the pad")
            out.append(v)
        return out


def _uniform_scalar(seed, tag, replica, x, t, idx):
    from .rng import mix

    return (mix(seed, tag, replica, x, t, idx) >> 11) * 2.0 ** -53


def run_ssep_walker(config: EnvConfig, p_bullet: float, p_circ: float,
                    record_ts: np.ndarray, x0: int = 0) -> np.ndarray:
    """Co-evolve one walker with an exclusion window; exact and deterministic.

    record_ts is a sorted int array of times at which the walker position is
    wanted; its last entry sets the number of steps.  The window is sized
    from a modest range guess and rebuilt deterministically (same streams,
    hence the same walk) whenever the walker outgrows it or its reads touch
    boundary-contaminated sites.
    """
    from .rng import mix as _mix_py

    record_ts = np.asarray(record_ts, dtype=np.int64)
    n_steps = int(record_ts[-1])
    seed, rep = config.seed, config.replica
    if config.rho == 1.0:
        # every site occupied: the environment never needs simulating
        out = np.empty(len(record_ts), dtype=np.int64)
        x = x0
        rec = 0
        wtag = int(StreamTag.WALKER_UNIFORM)
        for n in range(n_steps):
            while rec < len(record_ts) and record_ts[rec] == n:
                out[rec] = x
                rec += 1
            u = (_mix_py(seed, wtag, rep, x, n, 0) >> 11) * 2.0 ** -53
            x += 1 if u <= p_bullet else -1
        out[rec:] = x
        return out
    gamma = config.kind.gamma
    vh = config.valid_halfwidth()
    mf = config.margin_factor
    pad = margin(n_steps, gamma, mf)
    # allocation is cheap (only the active part is ever advanced), so cover
    # the whole reachable light cone and let retries handle margin breaches
    rg = n_steps
    nslab = max(2, int(math.ceil(2 * gamma)))
    drift_lo = 0.0
    drift_hi = 0.0
    attempts = 0
    while True:
        rg = min(rg, max(8, vh - int(pad) - 2))
        win = SsepWindow(config, x0 - rg, x0 + rg, depth=n_steps, pad=pad, nslab=nslab)
        out = np.empty(len(record_ts), dtype=np.int64)
        if HAVE_NUMBA:
            # frontier poison is replanted as the walker's range grows, so
            # the active margin uses a factor sized for ~gamma*T injections
            # (penetration odds ~exp(-mf^2/4) each); a drifting walker needs
            # its frontier to lead it, which is learnt from aborted attempts.
            # every retry replays the identical walk, just evaluated wider.
            mf_active = 1.25 * mf
            rc, xmin, xmax, n_reached = _kernels.ssep_walker_run(
                win.occ, win.nxt, win.cnt, win.h_edge, win.lo, win.nslab, gamma,
                np.uint64(seed), int(StreamTag.WALKER_UNIFORM), rep, x0, n_steps,
                p_bullet, p_circ, record_ts, win._buf_t, win._buf_e, out,
                mf_active, 32.0, drift_lo, drift_hi)
            if rc == 0:
                return out
            attempts += 1
            if attempts > 24:
                raise WindowError("walker window retries exhausted")
            if rc == 3:
                nslab = 2 * (win.nslab + 1)
                continue
            if rc == 1:
                rg *= 2
                continue
            n_ref = max(n_reached, 1)
            new_lo = min(1.0, max(drift_lo, 1.3 * max(0, x0 - xmin) / n_ref + 0.02))
            new_hi = min(1.0, max(drift_hi, 1.3 * max(0, xmax - x0) / n_ref + 0.02))
            if new_lo > drift_lo or new_hi > drift_hi:
                drift_lo, drift_hi = new_lo, new_hi
            else:
                mf *= 1.25
                pad = margin(n_steps, gamma, mf)
            continue
        try:
            x = x0
            rec = 0
            wtag = int(StreamTag.WALKER_UNIFORM)
            for n in range(n_steps):
                while rec < len(record_ts) and record_ts[rec] == n:
                    out[rec] = x
                    rec += 1
                v = win.count_at(x, n)
                u = (_mix_py(seed, wtag, rep, x, n, 0) >> 11) * 2.0 ** -53
                x += 1 if u <= (p_bullet if v else p_circ) else -1
            out[rec:] = x
            return out
        except PoisonError:
            pad *= 1.5
        except WindowError:
            rg *= 2
