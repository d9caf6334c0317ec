"""Machine checkers for the deterministic path lemmas.

Each check here is a statement that must hold on *every* realization meeting
its preconditions, not just with high probability: a box of one scale whose
children are all slow forces the parent to be slow (trichotomy); a trapped
point drags down every start to its left (trapped-implies-slow); a walker
starting near a threatened point either speeds past the upper speed on some
block or ends up delayed (delay dichotomy).  The checkers evaluate the
events and return a witness; failing to find any verdict is a hard error,
never a statistic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from .scales import BoxIndex, EventSpec, ScaleLadder, box_event, d_s, tile
from .walker import WalkParams, batch_displacements, on_web, row_points, trajectory


class PreconditionError(ValueError):
    """A checker was invoked outside its guard; reported, never skipped."""


class LemmaViolation(AssertionError):
    """A deterministic lemma failed on a realization - a genuine bug."""


@dataclass(frozen=True)
class TrapParams:
    k_horizon: float
    delta: float
    v_minus: float
    v_plus: float
    r: int = 1

    def __post_init__(self):
        if not 0.0 < self.delta <= 0.5:
            raise ValueError(f"delta must lie in (0, 1/2], got {self.delta}")
        if self.r < 1:
            raise ValueError("r must be a positive integer")
        if self.k_horizon < 1.0:
            raise ValueError("trap horizon K must be >= 1")
        if abs((self.v_plus - self.v_minus) - 4.0 * self.delta) > 1e-12:
            raise ValueError("speeds and delta must satisfy v_plus - v_minus = 4 delta")

    @classmethod
    def from_speeds(cls, v_minus: float, v_plus: float, k_horizon: float, r: int = 1):
        return cls(k_horizon=k_horizon, delta=(v_plus - v_minus) / 4.0,
                   v_minus=v_minus, v_plus=v_plus, r=r)


@dataclass(frozen=True)
class TrichotomyVerdict:
    kind: str                     # "a_max" | "pair" | "slow_parent"
    child: Optional[BoxIndex] = None
    partner: Optional[BoxIndex] = None


def check_trichotomy(m: BoxIndex, lad: ScaleLadder, v_min: float, v_max: float,
                     evaluator: Callable[[EventSpec], bool]) -> TrichotomyVerdict:
    """Find which branch of the scale-recursion alternative holds for m.

    Either some child sees a start faster than v_max, or two children at
    horizontal distance >= 4hL_k both see starts faster than v_min, or the
    parent interval itself stays below v_min + (v_max - v_min)/sqrt(l_k).
    One of the three must hold on every realization; `evaluator` maps an
    EventSpec to its occurrence (inject a stub to exercise the logic).
    """
    if not 0.0 < v_min < v_max <= 2.0:
        raise PreconditionError(f"need 0 < v_min < v_max <= 2, got ({v_min}, {v_max})")
    k = m.k - 1
    if k < 0:
        raise PreconditionError("trichotomy needs a tiled level (k >= 1)")
    ell = lad.ratio(k)
    if ell < (6.0 / v_min) ** 2:
        raise PreconditionError(
            f"scale ratio {ell} below the guard (6/v_min)^2 = {(6.0 / v_min) ** 2:.1f}"
        )
    children = tile(m, lad)
    hlk = m.h * lad.scale(k)
    for c in children:
        if evaluator(box_event(c, lad, v_max)):
            return TrichotomyVerdict(kind="a_max", child=c)
    slow_hits = [c for c in children if evaluator(box_event(c, lad, v_min))]
    if slow_hits:
        left = min(slow_hits, key=lambda c: c.anchor[0])
        right = max(slow_hits, key=lambda c: c.anchor[0])
        if d_s(left, right) >= 4 * hlk:
            return TrichotomyVerdict(kind="pair", child=left, partner=right)
    v_parent = v_min + (v_max - v_min) / math.sqrt(ell)
    if not evaluator(box_event(m, lad, v_parent)):
        return TrichotomyVerdict(kind="slow_parent")
    raise LemmaViolation(
        f"no trichotomy branch holds for box {m} at (v_min, v_max) = ({v_min}, {v_max})"
    )


def env_evaluator(env, params: WalkParams, refine: int = 0):
    from .scales import evaluate_event

    return lambda spec: evaluate_event(spec, env, params, refine)


def _closed_row_points(t: float, a: float, b: float):
    """Web points on the row with abscissa in the closed interval [a, b]."""
    pts = [p for p in row_points(t, a, b) if p >= a and on_web(p, t)]
    if on_web(b, t) and (not pts or pts[-1] != b):
        pts.append(b)
    return pts


def is_trapped(w, tp: TrapParams, env, params: WalkParams):
    """Does some web start in w + [dK, 2dK] x {0} end K-displaced below
    (v_minus + delta) K?  Returns (flag, witness point or None)."""
    x0, t0 = float(w[0]), float(w[1])
    k_hor = tp.k_horizon
    lo = x0 + tp.delta * k_hor
    hi = x0 + 2.0 * tp.delta * k_hor
    pts = _closed_row_points(t0, lo, hi)
    if not pts:
        return False, None
    starts = [(p, t0) for p in pts]
    bound = (tp.v_minus + tp.delta) * k_hor
    for (s, disp) in batch_displacements(starts, env, params, k_hor):
        if disp <= bound:
            return True, s
    return False, None


def is_threatened(w, tp: TrapParams, env, params: WalkParams):
    """Is one of the r anchors w + jK(v_plus, 1) trapped?  Monotone in r."""
    x0, t0 = float(w[0]), float(w[1])
    for j in range(tp.r):
        anchor = (x0 + j * tp.k_horizon * tp.v_plus, t0 + j * tp.k_horizon)
        hit, wit = is_trapped(anchor, tp, env, params)
        if hit:
            return True, j, wit
    return False, None, None


@dataclass(frozen=True)
class DichotomyVerdict:
    kind: str                 # "speedup" | "delayed" | "precondition_unmet"
    block: Optional[int] = None
    witness: Optional[tuple] = None


def delay_dichotomy(y, tp: TrapParams, env, params: WalkParams) -> DichotomyVerdict:
    """Threatened start points either speed past v_plus on a block or arrive
    delayed over r blocks; on every realization one of the two holds.

    The hypothesis (some point of y + [-dK/4, 0] x {0} is (K, r)-threatened)
    is certified by scanning, for each block j, the web points whose offset
    from y + jK(v_plus, 1) lies in [3dK/4, 2dK]; any such slow witness makes
    some point of the segment threatened and vice versa.
    """
    if tp.k_horizon < 4.0 / tp.delta:
        raise PreconditionError(
            f"trap horizon {tp.k_horizon} below the guard 4/delta = {4.0 / tp.delta:.1f}"
        )
    x0, t0 = float(y[0]), float(y[1])
    k_hor, delta, v_plus, r = tp.k_horizon, tp.delta, tp.v_plus, tp.r
    witness = None
    for j in range(r):
        ax = x0 + j * k_hor * v_plus
        at = t0 + j * k_hor
        lo = ax + 0.75 * delta * k_hor
        hi = ax + 2.0 * delta * k_hor
        pts = _closed_row_points(at, lo, hi)
        if not pts:
            continue
        starts = [(p, at) for p in pts]
        bound = (v_plus - 3.0 * delta) * k_hor
        for (s, disp) in batch_displacements(starts, env, params, k_hor):
            if disp <= bound:
                witness = s
                break
        if witness is not None:
            break
    if witness is None:
        return DichotomyVerdict(kind="precondition_unmet")
    tr = trajectory(y, env, params, r * k_hor)
    speed_bound = (v_plus + delta / (2.0 * r)) * k_hor
    for j in range(r):
        if tr.position((j + 1) * k_hor) - tr.position(j * k_hor) >= speed_bound:
            return DichotomyVerdict(kind="speedup", block=j, witness=witness)
    if tr.displacement(r * k_hor) <= (v_plus - delta / (2.0 * r)) * r * k_hor:
        return DichotomyVerdict(kind="delayed", witness=witness)
    raise LemmaViolation(f"neither speedup nor delay at y={y} with {tp}")


def trapped_implies_slow(w, tp: TrapParams, env, params: WalkParams) -> bool:
    """Every web start in w + [0, dK] x {0} of a K-trapped point w is held
    below (v_plus - delta) K; exact consequence of order preservation."""
    hit, _ = is_trapped(w, tp, env, params)
    if not hit:
        raise PreconditionError(f"point {w} is not trapped at K={tp.k_horizon}")
    x0, t0 = float(w[0]), float(w[1])
    pts = _closed_row_points(t0, x0, x0 + tp.delta * tp.k_horizon)
    starts = [(p, t0) for p in pts]
    bound = (tp.v_plus - tp.delta) * tp.k_horizon
    for (_, disp) in batch_displacements(starts, env, params, tp.k_horizon):
        if disp > bound:
            return False
    return True


def dump_verdicts(rows, csv_path) -> None:
    """Verdict log: sample_id,check,verdict,witness_x,witness_t."""
    with open(csv_path, "w") as f:
        f.write("sample_id,check,verdict,witness_x,witness_t\n")
        for sample_id, check, verdict, wit in rows:
            wx = "" if wit is None else repr(float(wit[0]))
            wt = "" if wit is None else repr(float(wit[1]))
            f.write(f"{sample_id},{check},{verdict},{wx},{wt}\n")
