"""The coupled family of walkers driven by site uniforms and an environment.

A walker started at an even-parity integer space-time point (x + t even)
jumps right with probability p_bullet on an occupied site and p_circ on an
empty one, using the shared uniform attached to its current space-time
point; walkers therefore coalesce forever once they meet.  Starts anywhere
else in the plane first rise vertically to the diagonal web spanned by the
even lattice, then slide along their diagonal to the lattice itself.

All trajectories are piecewise linear with slopes in {-1, 0, +1}, stored as
breakpoint nodes; comparisons between trajectories at shared breakpoints are
therefore exact, and the monotonicity checks below are pathwise statements
with zero tolerance, not statistical ones.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .rng import StreamLabel, StreamTag, mix, uniform_array


@dataclass(frozen=True)
class WalkParams:
    p_bullet: float
    p_circ: float

    def __post_init__(self):
        if not (0.0 < self.p_circ <= self.p_bullet < 1.0):
            raise ValueError(
                f"need 0 < p_circ <= p_bullet < 1, got ({self.p_bullet}, {self.p_circ})"
            )


def _is_int(v: float) -> bool:
    return v == math.floor(v)


def on_even_lattice(x: float, t: float) -> bool:
    """Integer points with x = t mod 2 (where the discrete walk lives)."""
    return _is_int(x) and _is_int(t) and (int(x) + int(t)) % 2 == 0


def on_web(x: float, t: float) -> bool:
    """Points of the diagonal web: the even lattice plus its unit diagonals."""
    if on_even_lattice(x, t):
        return True
    if _is_int(t):
        return False
    n = math.floor(t)
    u = t - n
    m = math.floor(x)
    if not _is_int(x):
        fx = x - m
        return fx == u if (m + n) % 2 == 0 else fx == 1.0 - u
    # integer x, fractional t is never on a diagonal
    return False


def classify(x: float, t: float) -> str:
    if on_even_lattice(x, t):
        return "lattice"
    if on_web(x, t):
        return "diagonal"
    return "generic"


def entry_nodes(x: float, t: float) -> list:
    """Breakpoints [(t_abs, x), ...] from (x, t) to its even-lattice entry.

    Vertical rise to the diagonal web, then along the diagonal of parity
    floor(x) + floor(t) to the lattice corner; already-entered points return
    a single node.
    """
    nodes = [(t, x)]
    if on_even_lattice(x, t):
        return nodes
    if on_web(x, t):
        n = math.floor(t)
        d = 1.0 if (math.floor(x) + n) % 2 == 0 else -1.0
        s = 1.0 - (t - n)
        nodes.append((t + s, x + d * s))
        return nodes
    m = math.floor(x)
    fx = x - m
    if fx == 0.0:
        xi = int(x)
        n = math.ceil(t)
        if (n + xi) % 2 != 0:
            n += 1
        if n > t:
            nodes.append((float(n), x))
        return nodes
    n = math.floor(t)
    for nn in (n, n + 1):
        h = nn + (fx if (m + nn) % 2 == 0 else 1.0 - fx)
        if h >= t:
            break
    if h > t:
        nodes.append((h, x))
    d = 1.0 if (m + nn) % 2 == 0 else -1.0
    s = 1.0 - (h - nn)
    nodes.append((h + s, x + d * s))
    return nodes


def walker_u(seed: int, replica: int, x: int, n: int) -> float:
    return (mix(seed, StreamTag.WALKER_UNIFORM, replica, x, n, 0) >> 11) * 2.0 ** -53


class Trajectory:
    """One walker's path, stored as breakpoint nodes at absolute times."""

    def __init__(self, start, nodes):
        self.start = start
        self.nodes = nodes  # [(t_abs, x)], strictly increasing t, slopes in {0, +-1}
        self._times = [t for t, _ in nodes]

    def position_abs(self, t_abs: float) -> float:
        times = self._times
        if not times[0] <= t_abs <= times[-1]:
            raise ValueError(f"time {t_abs} outside trajectory span")
        i = bisect_right(times, t_abs) - 1
        if i == len(times) - 1:
            return self.nodes[-1][1]
        t0, x0 = self.nodes[i]
        t1, x1 = self.nodes[i + 1]
        if t_abs == t0:
            return x0
        return x0 + (t_abs - t0) * (x1 - x0) / (t1 - t0)

    def position(self, s: float) -> float:
        """Position at time s after the start."""
        return self.position_abs(self.start[1] + s)

    def displacement(self, s: float) -> float:
        return self.position(s) - self.start[0]

    def lipschitz_ok(self) -> bool:
        for (t0, x0), (t1, x1) in zip(self.nodes, self.nodes[1:]):
            if abs(x1 - x0) > (t1 - t0) + 1e-12:
                return False
        return True


def trajectory(w, env, params: WalkParams, horizon: float) -> Trajectory:
    """Path of the walker started at w = (x, t), up to time horizon after it."""
    x0, t0 = float(w[0]), float(w[1])
    t_end = t0 + horizon
    nodes = entry_nodes(x0, t0)
    td, xd = nodes[-1][0], nodes[-1][1]
    if td > t_end:
        # the horizon ends during the entry phase; trim to it
        trimmed = [nd for nd in nodes if nd[0] < t_end]
        last_t, last_x = trimmed[-1]
        nxt = nodes[len(trimmed)]
        frac = (t_end - last_t) / (nxt[0] - last_t)
        trimmed.append((t_end, last_x + frac * (nxt[1] - last_x)))
        return Trajectory((x0, t0), trimmed)
    x = int(xd)
    n = int(td)
    seed = env.config.seed
    rep = env.config.replica
    pb, pc = params.p_bullet, params.p_circ
    while n < t_end:
        v = env.count_at(x, n)
        u = walker_u(seed, rep, x, n)
        x += 1 if u <= (pb if v > 0 else pc) else -1
        n += 1
        nodes.append((float(n), float(x)))
    return Trajectory((x0, t0), nodes)


@dataclass
class WalkerFront:
    """Distinct walker columns at one integer time, with the starts absorbed
    into each column; order and strict monotonicity of columns is preserved
    by every step, merges happen only when columns land on one site."""

    time: int
    columns: list
    groups: list

    def check(self):
        for a, b in zip(self.columns, self.columns[1:]):
            if a >= b:
                raise AssertionError("front columns must increase strictly")


def step(front: WalkerFront, env, params: WalkParams) -> WalkerFront:
    """Advance every column one unit of time, merging collisions."""
    n = front.time
    for z in front.columns:
        if (z + n) % 2 != 0:
            raise ValueError(f"column {z} off the walk lattice at time {n}")
    counts = env.counts_at(front.columns, n)
    seed = env.config.seed
    rep = env.config.replica
    pb, pc = params.p_bullet, params.p_circ
    if len(front.columns) >= 16:
        xs = np.asarray(front.columns, dtype=np.int64)
        us = uniform_array(seed, StreamLabel(StreamTag.WALKER_UNIFORM, rep), xs, n, 0)
        ps = np.where(np.asarray(counts) > 0, pb, pc)
        moves = np.where(us <= ps, 1, -1)
        new_pos = (xs + moves).tolist()
    else:
        new_pos = []
        for z, v in zip(front.columns, counts):
            u = walker_u(seed, rep, z, n)
            new_pos.append(z + (1 if u <= (pb if v > 0 else pc) else -1))
    columns = []
    groups = []
    for z, g in zip(new_pos, front.groups):
        if columns and z == columns[-1]:
            groups[-1] = groups[-1] + g
        else:
            columns.append(z)
            groups.append(list(g))
    return WalkerFront(time=n + 1, columns=columns, groups=groups)


def batch_displacements(starts, env, params: WalkParams, horizon: float):
    """Displacements at time `horizon` for starts sharing one time row.

    One coalescing front sweep; results agree exactly with independent
    `trajectory` runs because merged columns share all later uniforms.
    Returns a list of (start, displacement) in the input order.
    """
    table = batch_displacements_multi(starts, env, params, [horizon])
    return list(zip(starts, table[float(horizon)]))


def batch_displacements_multi(starts, env, params: WalkParams, horizons):
    """Displacements of one start row at several horizons from one sweep.

    Walkers from the longest interval pass through every shorter horizon on
    the way, and coalesced walkers never perturb each other, so a single
    front serves the whole ladder.  Returns {horizon: [disp per start]}.
    """
    if not starts:
        return {float(h): [] for h in horizons}
    row_t = float(starts[0][1])
    if any(float(s[1]) != row_t for s in starts):
        raise ValueError("batch starts must share their time row")
    hs = sorted(set(float(h) for h in horizons))
    t_ends = [row_t + h for h in hs]
    entries = []
    entry_traj = {}
    for i, s in enumerate(starts):
        nodes = entry_nodes(float(s[0]), row_t)
        td, xd = nodes[-1]
        entry_traj[i] = (td, Trajectory((float(s[0]), row_t), nodes))
        if td <= t_ends[-1]:
            entries.append((int(td), int(xd), i))
    captures = set()
    for te in t_ends:
        captures.add(math.floor(te))
        if te != math.floor(te):
            captures.add(math.floor(te) + 1)
    snap = {}
    if entries:
        entries.sort()
        k = 0
        front = None
        n = min(entries[0][0], min(captures))
        n_stop = max(captures)
        while True:
            cols, grps = ([], []) if front is None else (front.columns, front.groups)
            while k < len(entries) and entries[k][0] == n:
                _, xd, i = entries[k]
                j = bisect_right(cols, xd)
                if j > 0 and cols[j - 1] == xd:
                    grps[j - 1].append(i)
                else:
                    cols.insert(j, xd)
                    grps.insert(j, [i])
                k += 1
            front = WalkerFront(time=n, columns=cols, groups=grps)
            if n in captures:
                here = {}
                for z, g in zip(front.columns, front.groups):
                    for i in g:
                        here[i] = float(z)
                snap[n] = here
            if n == n_stop:
                break
            front = step(front, env, params)
            n += 1
    out = {}
    for h, te in zip(hs, t_ends):
        n0 = math.floor(te)
        frac = te - n0
        disps = []
        for i, s in enumerate(starts):
            td, traj = entry_traj[i]
            if td > te:
                # the horizon ends inside the entry phase
                disps.append(traj.position_abs(te) - float(s[0]))
                continue
            a = snap[n0][i]
            if frac == 0.0:
                disps.append(a - float(s[0]))
            else:
                b = snap[n0 + 1][i]
                disps.append(a + frac * (b - a) - float(s[0]))
        out[h] = disps
    return out


def crossing_check(z, z_prime, env, params: WalkParams, horizon: float) -> bool:
    """Time-shifted ordering of two walks started in each other's cone.

    Requires pi1(z') <= pi1(z) - |pi2(z') - pi2(z)|; then the walk from z'
    stays weakly left of the walk from z when both are compared at equal
    absolute times.  The comparison grid is the union of both trajectories'
    breakpoints, so the verdict is exact for the whole time interval.
    """
    x1, t1 = float(z[0]), float(z[1])
    x0, t0 = float(z_prime[0]), float(z_prime[1])
    if x0 > x1 - abs(t0 - t1):
        raise ValueError("start pair violates the ordering cone")
    tau0 = max(t0, t1)
    tau1 = tau0 + horizon
    tr_hi = trajectory(z, env, params, tau1 - t1)
    tr_lo = trajectory(z_prime, env, params, tau1 - t0)
    taus = sorted(
        {tau0, tau1}
        | {t for t, _ in tr_hi.nodes if tau0 <= t <= tau1}
        | {t for t, _ in tr_lo.nodes if tau0 <= t <= tau1}
    )
    for tau in taus:
        if tr_lo.position_abs(tau) > tr_hi.position_abs(tau):
            return False
    return True


def row_points(t: float, a: float, b: float):
    """Web points on the row at time t with abscissa in [a, b), plus a itself.

    This is the start grid over which interval events are evaluated: any
    real start merges into the web within two time units and is sandwiched
    by its neighbouring grid starts, so the grid extremes bracket the
    interval's displacement extremes to within the grid spacing.
    """
    pts = []
    if _is_int(t):
        par = int(t) % 2
        x = math.ceil(a)
        if (x + par) % 2 != 0:
            x += 1
        while x < b:
            pts.append(float(x))
            x += 2
    else:
        n = math.floor(t)
        u = t - n
        m = math.floor(a) - 1
        while m < b:
            h = m + (u if (m + n) % 2 == 0 else 1.0 - u)
            if a <= h < b:
                pts.append(h)
            m += 1
        pts.sort()
    if not pts or pts[0] != a:
        pts.insert(0, float(a))
    return pts


def dump_trajectory(traj: Trajectory, csv_path, json_path=None, meta=None) -> None:
    """Write integer-time positions as `t,x` rows plus an optional sidecar."""
    t0 = traj.start[1]
    t_last = traj.nodes[-1][0]
    with open(csv_path, "w") as f:
        f.write("t,x\n")
        n = math.ceil(t0)
        while n <= t_last:
            f.write(f"{n},{traj.position_abs(float(n))!r}\n")
            n += 1
    if json_path is not None:
        with open(json_path, "w") as f:
            json.dump(meta or {}, f, indent=2)
            f.write("\n")
