"""Renormalization geometry: the scale ladder, boxes, tilings and interval
events.

The ladder multiplies each scale by the floor of its fourth root; a box at
scale L and aspect h spans [-hL, 2hL) x [0, hL) around its anchor, which is
exactly the cone reachable from starts on its bottom interval [0, hL).  A
box of the next scale is tiled by 3*l^2 child boxes on an (hL)-grid.

An interval event asks whether some start on the bottom interval moves
faster (or slower) than a given speed over the box height; it is evaluated
on the web points of the interval (plus the left endpoint), which bracket
the true extremes to within the grid spacing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

from .walker import WalkParams, batch_displacements, row_points


def fourth_root_floor(n: int) -> int:
    r = math.isqrt(math.isqrt(n))
    while (r + 1) ** 4 <= n:
        r += 1
    while r ** 4 > n:
        r -= 1
    return r


@dataclass(frozen=True)
class ScaleLadder:
    l0: int
    levels: tuple  # ((L_k, l_k), ...)

    def scale(self, k: int) -> int:
        return self.levels[k][0]

    def ratio(self, k: int) -> int:
        return self.levels[k][1]

    def depth(self) -> int:
        return len(self.levels)


def ladder(l0: int, depth: int) -> ScaleLadder:
    """Exact integer scale ladder L_{k+1} = floor(L_k^(1/4)) * L_k."""
    if l0 < 16:
        raise ValueError(f"base scale must be at least 16, got {l0}")
    if depth < 1:
        raise ValueError("depth must be at least 1")
    levels = []
    lk = l0
    for _ in range(depth):
        ell = fourth_root_floor(lk)
        levels.append((lk, ell))
        lk = ell * lk
    lad = ScaleLadder(l0=l0, levels=tuple(levels))
    for k in range(depth - 1):
        l_k, ell_k = lad.levels[k]
        assert lad.levels[k + 1][0] == ell_k * l_k
    return lad


def dump_ladder(lad: ScaleLadder, csv_path) -> None:
    with open(csv_path, "w") as f:
        f.write("k,L_k,l_k\n")
        for k, (lk, ell) in enumerate(lad.levels):
            f.write(f"{k},{lk},{ell}\n")


@dataclass(frozen=True)
class BoxIndex:
    h: int
    k: int
    anchor: tuple  # (x, t)

    def __post_init__(self):
        if self.h < 1:
            raise ValueError("aspect h must be >= 1")


def box_bounds(m: BoxIndex, lad: ScaleLadder):
    """((x_lo, x_hi), (t_lo, t_hi)) of the box, half-open on the right/top."""
    hl = m.h * lad.scale(m.k)
    x, t = m.anchor
    return (x - hl, x + 2 * hl), (t, t + hl)


def interval_of(m: BoxIndex, lad: ScaleLadder):
    """Bottom interval [x, x + hL) x {t} whose starts stay inside the box."""
    hl = m.h * lad.scale(m.k)
    x, t = m.anchor
    return (x, x + hl, t)


def d_s(m1: BoxIndex, m2: BoxIndex) -> float:
    """Horizontal anchor distance, defined within one (h, k) family."""
    if (m1.h, m1.k) != (m2.h, m2.k):
        raise ValueError("horizontal distance needs matching aspect and level")
    return abs(m1.anchor[0] - m2.anchor[0])


def tile(m: BoxIndex, lad: ScaleLadder) -> list:
    """The 3*l_k^2 children of a level-(k+1) box, anchored on the (hL_k)-grid."""
    if m.k < 1 or m.k >= lad.depth():
        raise ValueError(f"level {m.k} has no tiling in this ladder")
    k = m.k - 1
    ell = lad.ratio(k)
    hl = m.h * lad.scale(k)
    x, t = m.anchor
    children = [
        BoxIndex(h=m.h, k=k, anchor=(x + i * hl, t + j * hl))
        for j in range(0, ell)
        for i in range(-ell, 2 * ell)
    ]
    assert len(children) == 3 * ell * ell
    return children


@dataclass(frozen=True)
class EventSpec:
    """Does some start on the interval attain displacement >= vH (Above) or
    <= vH (Below) at time H after the interval's row?"""

    direction: Literal["above", "below"]
    v: float
    horizon: float
    anchor: tuple  # (x, t) left end of the start interval

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("event horizon must be positive")
        if self.direction not in ("above", "below"):
            raise ValueError(f"unknown direction {self.direction!r}")


def box_event(m: BoxIndex, lad: ScaleLadder, v: float,
              direction: str = "above") -> EventSpec:
    hl = m.h * lad.scale(m.k)
    return EventSpec(direction=direction, v=v, horizon=float(hl), anchor=m.anchor)


def displacement_extremes(spec_anchor, horizon, env, params: WalkParams,
                          refine: int = 0):
    """(min, max) displacement over the interval's start grid.

    With refine > 0, that many extra equally spaced generic starts are
    inserted in each grid gap (the documented strict-grid refinement).
    """
    x0, t0 = float(spec_anchor[0]), float(spec_anchor[1])
    pts = row_points(t0, x0, x0 + horizon)
    if refine > 0:
        extra = []
        for a, b in zip(pts, pts[1:]):
            stepw = (b - a) / (refine + 1)
            extra.extend(a + i * stepw for i in range(1, refine + 1))
        pts = sorted(pts + extra)
    starts = [(p, t0) for p in pts]
    disps = [d for _, d in batch_displacements(starts, env, params, horizon)]
    return min(disps), max(disps)


def evaluate_event(spec: EventSpec, env, params: WalkParams,
                   refine: int = 0) -> bool:
    """Evaluate an interval event on one realization.

    Speeds beyond the unit speed bound are decided without touching the
    environment: displacements over a horizon H always lie in [-H, H].
    """
    if spec.direction == "above":
        if spec.v > 1.0:
            return False
        if spec.v <= -1.0:
            return True
    else:
        if spec.v >= 1.0:
            return True
        if spec.v < -1.0:
            return False
    lo, hi = displacement_extremes(spec.anchor, spec.horizon, env, params, refine)
    vh = spec.v * spec.horizon
    if spec.direction == "above":
        return hi >= vh
    return lo <= vh
