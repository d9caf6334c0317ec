"""Compiled inner loops for the streaming exclusion-process window.

The algorithm is the plain graphical construction: per-edge exponential
clocks, neighbouring sites swapping contents at each arrival.  Events are
processed in short time slabs; within a slab, maximal runs of consecutive
firing edges (clusters) are sorted and applied in time order, while distinct
clusters share no site and therefore commute.  Boundary edges swap in
unknowable values, marked with the POISON code, which then propagates like
any other value; window sizing keeps poison away from queried sites.

Everything here must reproduce bit-for-bit the draws of :mod:`dynrwre.rng`
and the event application order of :func:`dynrwre.environment.evolve`; the
test suite compares the three paths on common realizations.
"""

import math

import numpy as np
from numba import njit, uint64

POISON = 2

_GOLDEN = uint64(0x9E3779B97F4A7C15)
_MIX_A = uint64(0xBF58476D1CE4E5B9)
_MIX_B = uint64(0x94D049BB133111EB)
_INV53 = 2.0 ** -53


@njit(cache=True, inline="always")
def _absorb(h, w_signed):
    h = (h ^ np.uint64(w_signed)) + _GOLDEN
    h = (h ^ (h >> uint64(30))) * _MIX_A
    h = (h ^ (h >> uint64(27))) * _MIX_B
    return h ^ (h >> uint64(31))


@njit(cache=True, inline="always")
def _mix(seed_u, tag, replica, x, t, idx):
    """seed_u is uint64; the remaining words are int64, wrapped two's-complement."""
    h = seed_u
    h = _absorb(h, tag)
    h = _absorb(h, replica)
    h = _absorb(h, x)
    h = _absorb(h, t)
    h = _absorb(h, idx)
    return h


@njit(cache=True, inline="always")
def _uniform(seed_u, tag, replica, x, t, idx):
    return (_mix(seed_u, tag, replica, x, t, idx) >> uint64(11)) * _INV53


@njit(cache=True)
def mix_kernel(seed_u, tag, replica, x, t, idx):
    """Exposed for the bit-equality test against rng.mix."""
    return _mix(seed_u, tag, replica, x, t, idx)


@njit(cache=True, inline="always")
def _uniform_edge(h_edge_j, idx):
    """Uniform draw idx of an edge stream, from the precomputed
    (seed, tag, replica, x) prefix; equals the full five-word mix."""
    h = _absorb(h_edge_j, 0)
    h = _absorb(h, idx)
    return (h >> uint64(11)) * _INV53


@njit(cache=True)
def advance_units(occ, nxt, cnt, h_edge, time0, n_units, nslab, gamma,
                  buf_t, buf_e):
    """Apply every swap event in (time0, time0 + n_units] to the window.

    occ[i] is the value at site lo + i; edge j joins occ[j-1] and occ[j],
    with j = 0 and j = len(nxt)-1 the poison boundaries.  nxt[j] holds the
    next pending event time of edge j, cnt[j] the draws consumed so far and
    h_edge[j] the premixed stream prefix.  Returns 0, or -1 if a slab
    overflowed the sort buffer (caller restarts with a denser slab grid).
    """
    n_edges = nxt.shape[0]
    w = occ.shape[0]
    cap = buf_t.shape[0]
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
                c = 0
                k = j
                while k < n_edges and nxt[k] <= b:
                    while nxt[k] <= b:
                        if c >= cap:
                            return -1
                        buf_t[c] = nxt[k]
                        buf_e[c] = k
                        c += 1
                        cnt[k] += 1
                        u = _uniform_edge(h_edge[k], cnt[k])
                        nxt[k] += -math.log1p(-u) * inv_gamma
                    k += 1
                for a in range(1, c):  # insertion sort; clusters are tiny
                    tv = buf_t[a]
                    ev = buf_e[a]
                    i = a - 1
                    while i >= 0 and buf_t[i] > tv:
                        buf_t[i + 1] = buf_t[i]
                        buf_e[i + 1] = buf_e[i]
                        i -= 1
                    buf_t[i + 1] = tv
                    buf_e[i + 1] = ev
                for a in range(c):
                    e = buf_e[a]
                    if e == 0:
                        occ[0] = POISON
                    elif e == n_edges - 1:
                        occ[w - 1] = POISON
                    else:
                        tmp = occ[e - 1]
                        occ[e - 1] = occ[e]
                        occ[e] = tmp
                j = k + 1
    return 0


@njit(cache=True)
def edge_prefix(seed_u, tag, replica, x0, n):
    """Premixed (seed, tag, replica, x) prefixes for x = x0 .. x0+n-1."""
    out = np.empty(n, dtype=np.uint64)
    h0 = _absorb(_absorb(uint64(seed_u), tag), replica)
    for j in range(n):
        out[j] = _absorb(h0, x0 + j)
    return out


@njit(cache=True)
def _advance_unit_bounded(occ, nxt, cnt, h_edge, base, nslab, gamma,
                          alo, ahi, buf_t, buf_e):
    """One unit of swap events restricted to active sites [alo, ahi].

    Edges alo and ahi+1 couple to inactive territory and inject poison; the
    interior is exact.  Clusters of consecutive firing edges are applied in
    time order; disjoint clusters commute.
    """
    cap = buf_t.shape[0]
    inv_gamma = 1.0 / gamma
    for s in range(nslab):
        b = base + (s + 1) / nslab
        j = alo
        while j <= ahi + 1:
            if nxt[j] > b:
                j += 1
                continue
            c = 0
            k = j
            while True:
                t = nxt[k]
                while t <= b:
                    if c >= cap:
                        return -1
                    buf_t[c] = t
                    buf_e[c] = k
                    c += 1
                    cnt[k] += 1
                    u = _uniform_edge(h_edge[k], cnt[k])
                    t += -math.log1p(-u) * inv_gamma
                nxt[k] = t
                k += 1
                if k > ahi + 1 or nxt[k] > b:
                    break
            if k == j + 1:
                # isolated interior edge: its c swaps compose to their parity;
                # a boundary edge taints regardless (the parked value may be
                # carried away outside the active region between its events)
                if j <= alo:
                    occ[alo] = POISON
                elif j >= ahi + 1:
                    occ[ahi] = POISON
                elif c & 1:
                    tmp = occ[j - 1]
                    occ[j - 1] = occ[j]
                    occ[j] = tmp
                j = k + 1
                continue
            for a in range(1, c):
                tv = buf_t[a]
                ev = buf_e[a]
                i = a - 1
                while i >= 0 and buf_t[i] > tv:
                    buf_t[i + 1] = buf_t[i]
                    buf_e[i + 1] = buf_e[i]
                    i -= 1
                buf_t[i + 1] = tv
                buf_e[i + 1] = ev
            for a in range(c):
                e = buf_e[a]
                if e <= alo:
                    occ[alo] = POISON
                elif e >= ahi + 1:
                    occ[ahi] = POISON
                else:
                    tmp = occ[e - 1]
                    occ[e - 1] = occ[e]
                    occ[e] = tmp
            j = k + 1
    return 0


@njit(cache=True)
def ssep_walker_run(occ, nxt, cnt, h_edge, lo, nslab, gamma,
                    seed_u, wtag, replica, x0, n_steps,
                    p_bullet, p_circ, record_ts, buf_t, buf_e, out_pos,
                    margin_factor, pad_floor, drift_lo, drift_hi):
    """Co-evolve one walker with its window for n_steps unit times.

    Only an active interval around the walker's running extremes is
    advanced, padded by the diffusive margin for the time remaining plus an
    anticipated-drift allowance (a walker that keeps advancing replants its
    frontier poison in its own path unless the frontier leads it); sites
    pulled back into the active interval after a dormant spell are poisoned
    and their edge clocks fast-forwarded, so certainty is tracked exactly.

    Records the walker position at each time in record_ts (sorted, ending
    with n_steps).  Returns (rc, xmin, xmax, n_reached): rc = 0 done,
    1 walker left the window, 2 walker read a poisoned site, 3 slab
    overflow.
    """
    w = occ.shape[0]
    hw = _absorb(_absorb(uint64(seed_u), wtag), replica)
    x = x0
    xmin = x
    xmax = x
    rec = 0
    n_rec = record_ts.shape[0]
    alo = -1
    ahi = -1
    for n in range(n_steps):
        while rec < n_rec and record_ts[rec] == n:
            out_pos[rec] = x
            rec += 1
        i = x - lo
        if i < 1 or i >= w - 1:
            return 1, xmin, xmax, n
        v = occ[i]
        if v == POISON:
            return 2, xmin, xmax, n
        p = p_bullet if v > 0 else p_circ
        h = _absorb(_absorb(_absorb(hw, x), n), 0)
        u = (h >> uint64(11)) * _INV53
        x = x + 1 if u <= p else x - 1
        if x < xmin:
            xmin = x
        elif x > xmax:
            xmax = x
        # poison is replanted at the active frontier every time the range
        # grows, so the margin uses the extreme-value-safe factor rather
        # than the single-injection one
        rem = n_steps - n
        padrem = margin_factor * math.sqrt(gamma * rem) + pad_floor
        ilo = xmin - int(padrem + drift_lo * rem) - lo
        ihi = xmax + int(padrem + drift_hi * rem) - lo
        if ilo < 0:
            ilo = 0
        if ihi > w - 1:
            ihi = w - 1
        if alo < 0:
            alo = ilo
            ahi = ihi
            if n > 0:
                for q in range(alo, ahi + 1):
                    occ[q] = POISON
                for j in range(alo, ahi + 2):
                    while nxt[j] <= n:
                        cnt[j] += 1
                        uj = _uniform_edge(h_edge[j], cnt[j])
                        nxt[j] += -math.log1p(-uj) / gamma
        else:
            if ilo < alo:
                for q in range(ilo, alo):
                    occ[q] = POISON
                for j in range(ilo, alo):
                    while nxt[j] <= n:
                        cnt[j] += 1
                        uj = _uniform_edge(h_edge[j], cnt[j])
                        nxt[j] += -math.log1p(-uj) / gamma
            if ihi > ahi:
                for q in range(ahi + 1, ihi + 1):
                    occ[q] = POISON
                for j in range(ahi + 2, ihi + 2):
                    while nxt[j] <= n:
                        cnt[j] += 1
                        uj = _uniform_edge(h_edge[j], cnt[j])
                        nxt[j] += -math.log1p(-uj) / gamma
            alo = ilo
            ahi = ihi
        rc = _advance_unit_bounded(occ, nxt, cnt, h_edge, float(n), nslab, gamma,
                                   alo, ahi, buf_t, buf_e)
        if rc != 0:
            return 3, xmin, xmax, n
    while rec < n_rec and record_ts[rec] <= n_steps:
        out_pos[rec] = x
        rec += 1
    return 0, xmin, xmax, n_steps
