"""Monte Carlo estimators over replicated environment-walker realizations.

Replica r of an experiment draws every stream with replica label r, so
replicas are independent, reproducible and embarrassingly parallel; all
estimators are deterministic functions of (config, seed, replica range).
Coupled comparisons (densities rho < rho') share all streams except the
density threshold, giving pathwise domination rather than statistical
comparison.

The interval-event estimators evaluate each realization's displacement
extremes once and derive every (speed, horizon) event from them, which makes
empirical frequencies monotone in the speed by construction and keeps speed
grids cheap.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .environment import EnvConfig, PcrwEnv, Ssep, open_env
from .scales import EventSpec, evaluate_event
from .stats import (
    Estimate,
    batch_mean_interval,
    ks_normal_pvalue,
    paired_covariance_batches,
    t_interval,
    wilson,
)
from .walker import WalkParams, batch_displacements_multi, row_points, walker_u
from .window import PoisonError, SsepWindow, run_ssep_walker

# offsets sampling the fundamental shift cell |x| + |t| <= 1 (dyadic so that
# all derived geometry stays exactly representable)
DEFAULT_OFFSETS = (
    (0.0, 0.0),
    (0.5, 0.0),
    (-0.5, 0.0),
    (0.0, -0.5),
    (0.0, 0.5),
    (0.25, 0.25),
    (-0.25, -0.25),
    (0.5, -0.5),
)


def _pmap(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    chunk = max(1, len(items) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=chunk))


# ---------------------------------------------------------------------------
# walker runs


def walk_positions(config: EnvConfig, params: WalkParams, record_ts, x0: int = 0):
    """Walker positions at the requested integer times, any environment."""
    record_ts = np.asarray(record_ts, dtype=np.int64)
    if isinstance(config.kind, Ssep):
        return run_ssep_walker(config, params.p_bullet, params.p_circ, record_ts, x0)
    env = PcrwEnv(config)
    seed, rep = config.seed, config.replica
    pb, pc = params.p_bullet, params.p_circ
    n_steps = int(record_ts[-1])
    out = np.empty(len(record_ts), dtype=np.int64)
    x = x0
    rec = 0
    for n in range(n_steps):
        while rec < len(record_ts) and record_ts[rec] == n:
            out[rec] = x
            rec += 1
        v = env.count_at(x, n)
        u = walker_u(seed, rep, x, n)
        x += 1 if u <= (pb if v > 0 else pc) else -1
    out[rec:] = x
    return out


def _speed_worker(args):
    config, params, n_steps = args
    pos = walk_positions(config, params, np.array([n_steps], dtype=np.int64))
    return int(pos[0])


def estimate_speed(config: EnvConfig, params: WalkParams, n_steps: int,
                   n_rep: int, workers: int = 1) -> Estimate:
    """Mean of X_n / n over replicas, with a t interval."""
    items = [(replace(config, replica=r), params, n_steps) for r in range(n_rep)]
    finals = _pmap(_speed_worker, items, workers)
    return t_interval([x / n_steps for x in finals], seed=config.seed)


@dataclass(frozen=True)
class CltReport:
    speed: Estimate
    variances: tuple          # ((t, var of (X_t - t v_hat)), ...)
    scaling_ratios: tuple     # (var(2t)/var(t), ...) over doubling pairs
    ks_pvalue: float
    n: int


def _positions_worker(args):
    config, params, ts = args
    return walk_positions(config, params, ts).tolist()


def clt_check(config: EnvConfig, params: WalkParams, n_steps: int, n_rep: int,
              t_grid=None, force: bool = False, workers: int = 1) -> CltReport:
    """Gaussian-fluctuation diagnostics around the estimated speed.

    Refuses (unless forced) when the speed interval straddles zero, where
    diffusive behaviour is not expected to be testable this way.
    """
    ts = sorted(set(int(t) for t in (t_grid or [n_steps, 2 * n_steps])))
    ts_arr = np.asarray(ts, dtype=np.int64)
    items = [(replace(config, replica=r), params, ts_arr) for r in range(n_rep)]
    rows = np.asarray(_pmap(_positions_worker, items, workers), dtype=float)
    i_ref = ts.index(n_steps) if n_steps in ts else len(ts) - 1
    t_ref = ts[i_ref]
    speed = t_interval(rows[:, i_ref] / t_ref, seed=config.seed)
    if not force and speed.ci_low <= 0.0 <= speed.ci_high:
        raise ValueError(
            "speed interval contains zero; diffusive scaling is not certified "
            "there - pass force=True to run the diagnostics anyway"
        )
    v_hat = speed.value
    variances = []
    for j, t in enumerate(ts):
        centred = rows[:, j] - t * v_hat
        variances.append((t, float(centred.var(ddof=1))))
    ratios = []
    var_of = dict(variances)
    for t in ts:
        if 2 * t in var_of and var_of[t] > 0:
            ratios.append(var_of[2 * t] / var_of[t])
    z = (rows[:, i_ref] - t_ref * v_hat) / math.sqrt(t_ref)
    return CltReport(
        speed=speed,
        variances=tuple(variances),
        scaling_ratios=tuple(ratios),
        ks_pvalue=ks_normal_pvalue(z),
        n=n_rep,
    )


# ---------------------------------------------------------------------------
# interval-event estimators


def event_env_config(kind, rho: float, seed: int, h_max: float,
                     margin_factor: float = 6.0) -> EnvConfig:
    """Environment config whose ring covers the reach of interval events up
    to horizon h_max anchored near the origin (starts span [0, h_max), the
    walkers roam another h_max each way)."""
    from .environment import margin as _margin

    rate = kind.gamma if isinstance(kind, Ssep) else 1.0
    half = 2.0 * h_max + _margin(h_max, rate, max(8.0, margin_factor)) + 16
    m = 2 * math.ceil(half)
    return EnvConfig(kind=kind, rho=rho, horizon=float(h_max) + 4.0, seed=seed,
                     ring_size=m + (m % 2), margin_factor=margin_factor)


def _sweep_env(config: EnvConfig, x_lo: float, x_hi: float, depth: float):
    """Environment view for a displacement sweep over [x_lo, x_hi]."""
    if isinstance(config.kind, Ssep):
        if config.rho == 1.0:
            return open_env(config)
        # static boundaries see ~2*gamma*depth poison injections; size the
        # pad so none of them can cross (retried exactly if one does)
        pad_factor = max(8.0, config.margin_factor)
        return SsepWindow(config, int(math.floor(x_lo)), int(math.ceil(x_hi)),
                          depth=depth, pad=None if pad_factor is None else
                          pad_factor * math.sqrt(config.kind.gamma * depth) + 64)
    return PcrwEnv(config)


def interval_extremes_ladder(anchor, h_list, config: EnvConfig,
                             params: WalkParams, refine: int = 0):
    """(min, max) displacement per horizon H over starts in anchor+[0, H).

    One coalescing sweep serves the whole horizon ladder: walkers from the
    longest interval pass through every shorter horizon, and removing the
    starts beyond x0+H just restricts which displacements are ranked.
    """
    x0, t0 = float(anchor[0]), float(anchor[1])
    hs = sorted(set(float(h) for h in h_list))
    h_max = hs[-1]
    pts = row_points(t0, x0, x0 + h_max)
    if refine > 0:
        extra = []
        for a, b in zip(pts, pts[1:]):
            w = (b - a) / (refine + 1)
            extra.extend(a + i * w for i in range(1, refine + 1))
        pts = sorted(pts + extra)
    starts = [(p, t0) for p in pts]
    attempt = 0
    while True:
        env = _sweep_env(config, x0 - h_max - 4, x0 + 2 * h_max + 4,
                         depth=t0 + h_max + 4)
        try:
            table = batch_displacements_multi(starts, env, params, hs)
            break
        except PoisonError:
            attempt += 1
            if attempt > 6:
                raise
            config = replace(config, margin_factor=config.margin_factor * 1.5)
    for h in hs:
        assert min(table[h]) <= max(table[h])  # event completeness rests on this
    out = {}
    for h in hs:
        disp = [table[h][i] for i, p in enumerate(pts) if p < x0 + h or i == 0]
        out[h] = (min(disp), max(disp))
    return out


def _extremes_worker(args):
    config, params, offsets, h_list, refine = args
    res = []
    for off in offsets:
        res.append(interval_extremes_ladder(off, h_list, config, params, refine))
    return res


def _collect_extremes(config, params, h_list, n_rep, offsets, workers, refine=0):
    """extremes[r][o][H] -> (min disp, max disp)."""
    items = [(replace(config, replica=r), params, tuple(offsets), tuple(h_list), refine)
             for r in range(n_rep)]
    return _pmap(_extremes_worker, items, workers)


def _event_from_extremes(ext, direction: str, v: float, h: float) -> bool:
    lo, hi = ext[h]
    if direction == "above":
        return hi >= v * h
    return lo <= v * h


def estimate_ph(direction: str, v: float, h: float, config: EnvConfig,
                params: WalkParams, n_rep: int, offsets=DEFAULT_OFFSETS,
                workers: int = 1, _extremes=None) -> Estimate:
    """Largest empirical event frequency over the shift-cell offsets."""
    if n_rep < 30:
        raise ValueError("need at least 30 replicas for a stable frequency")
    if h < 4:
        raise ValueError("horizon below 4 has no start grid worth measuring")
    ext = _extremes if _extremes is not None else _collect_extremes(
        config, params, [h], n_rep, offsets, workers)
    best = None
    for o in range(len(offsets)):
        k = sum(1 for r in range(n_rep) if _event_from_extremes(ext[r][o], direction, v, h))
        est = wilson(k, n_rep, seed=config.seed)
        if best is None or est.value > best.value:
            best = est
    return best


@dataclass(frozen=True)
class DecayCurve:
    direction: str
    v: float
    points: tuple             # ((H, Estimate), ...) with H increasing
    verdict: str              # "decaying" | "flat" | "inconclusive"


def _curve_verdict(points) -> str:
    first = points[0][1]
    last = points[-1][1]
    if last.value == 0.0:
        return "decaying"
    if last.ci_high < first.ci_low:
        return "decaying"
    if last.ci_low > first.ci_high:
        return "flat"
    if max(p.width() for _, p in points) <= 0.3:
        return "flat"
    return "inconclusive"


def decay_curve(direction: str, v: float, config: EnvConfig, params: WalkParams,
                h_list, n_rep: int, offsets=DEFAULT_OFFSETS, workers: int = 1,
                _extremes=None) -> DecayCurve:
    """Event frequency along a geometric horizon ladder, with a decay verdict.

    Vanishing along the ladder is operationalized as interval separation
    between the first and last points (or an exactly zero tail); realization
    sets are shared across horizons and speeds.
    """
    hs = sorted(set(float(h) for h in h_list))
    if len(hs) < 4:
        raise ValueError("need at least four horizons to call a trend")
    ext = _extremes if _extremes is not None else _collect_extremes(
        config, params, hs, n_rep, offsets, workers)
    pts = []
    for h in hs:
        pts.append((h, estimate_ph(direction, v, h, config, params, n_rep,
                                   offsets, workers, _extremes=ext)))
    return DecayCurve(direction=direction, v=v, points=tuple(pts),
                      verdict=_curve_verdict(pts))


@dataclass(frozen=True)
class SpeedBracket:
    v_lo: float
    v_hi: float
    grid_step: float

    def __post_init__(self):
        if self.v_lo > self.v_hi:
            raise ValueError("bracket must be ordered")

    def intersects(self, lo: float, hi: float) -> bool:
        return not (hi < self.v_lo or lo > self.v_hi)


def bracket_speeds(config: EnvConfig, params: WalkParams, v_grid, h_list,
                   n_rep: int, offsets=DEFAULT_OFFSETS, workers: int = 1):
    """Bracket the asymptotic speed by scanning decay verdicts over a grid.

    The upper edge is the smallest grid speed whose fast-excursion curve
    decays, the lower edge the largest whose slow-excursion curve decays;
    inconclusive curves simply widen the bracket.  Returns the bracket and
    the two verdict maps.
    """
    vs = sorted(set(float(v) for v in v_grid))
    if vs[0] > -1.0 or vs[-1] < 1.0:
        raise ValueError("speed grid must span [-1, 1]")
    step = min(b - a for a, b in zip(vs, vs[1:]))
    hs = sorted(set(float(h) for h in h_list))
    ext = _collect_extremes(config, params, hs, n_rep, offsets, workers)
    above = {}
    below = {}
    for v in vs:
        above[v] = decay_curve("above", v, config, params, hs, n_rep, offsets,
                               workers, _extremes=ext).verdict
        below[v] = decay_curve("below", v, config, params, hs, n_rep, offsets,
                               workers, _extremes=ext).verdict
    v_plus = next((v for v in vs if above[v] == "decaying"), 1.0)
    v_minus = next((v for v in reversed(vs) if below[v] == "decaying"), -1.0)
    lo, hi = min(v_minus, v_plus), max(v_minus, v_plus)
    if hi - lo < step:
        lo, hi = lo - step / 2, hi + step / 2
    return SpeedBracket(v_lo=lo, v_hi=hi, grid_step=step), above, below


# ---------------------------------------------------------------------------
# decoupling experiments


@dataclass(frozen=True)
class CovReport:
    cov: Estimate
    mean1: float
    mean2: float
    arm: str
    separation: float


def _lateral_worker(args):
    config, h, d, width, threshold = args
    y1 = -(d // 2)
    y2 = d - d // 2
    strip1 = list(range(y1 - width + 1, y1 + 1))
    strip2 = list(range(y2, y2 + width))
    lo = min(strip1) - 1
    hi = max(strip2) + 1
    if isinstance(config.kind, Ssep) and config.rho < 1.0:
        pad = max(8.0, config.margin_factor) * math.sqrt(config.kind.gamma * h) + 64
        env = SsepWindow(config, lo, hi, depth=h + 2, pad=pad)
    else:
        env = open_env(config)
    sites = strip1 + strip2
    tot1 = 0
    tot2 = 0
    t_hi = int(h)
    for t in range(0, t_hi + 1):
        counts = env.counts_at(sites, t)
        tot1 += sum(counts[: len(strip1)])
        tot2 += sum(counts[len(strip1):])
    m1 = tot1 / (len(strip1) * (t_hi + 1))
    m2 = tot2 / (len(strip2) * (t_hi + 1))
    return (1 if m1 >= threshold else 0, 1 if m2 >= threshold else 0)


def lateral_cov(config: EnvConfig, h: float, separation: int, n_rep: int,
                arm: str = "far", strip_width: int = 8, threshold=None,
                n_batches: int = 50, workers: int = 1) -> CovReport:
    """Covariance of occupancy-threshold events in two boxes at distance
    `separation` on the same time row.

    The events read a strip of sites at the boxes' facing edges over the
    whole time window, so 'near' (separation 0, strips sharing one site)
    carries the environment's transport correlations while 'far'
    (separation >= H^(3/4)) should decorrelate.
    """
    if arm == "far":
        if separation < h ** 0.75:
            raise ValueError(f"far arm needs separation >= H^(3/4) = {h ** 0.75:.1f}")
    elif arm == "near":
        if separation != 0:
            raise ValueError("near arm is the zero-separation control")
    else:
        raise ValueError(f"unknown arm {arm!r}")
    if threshold is None:
        threshold = config.rho
    items = [(replace(config, replica=r), h, separation, strip_width, threshold)
             for r in range(n_rep)]
    pairs = _pmap(_lateral_worker, items, workers)
    a = [p[0] for p in pairs]
    b = [p[1] for p in pairs]
    batches = paired_covariance_batches(a, b, n_batches)
    est = batch_mean_interval(batches, seed=config.seed)
    return CovReport(cov=est, mean1=float(np.mean(a)), mean2=float(np.mean(b)),
                     arm=arm, separation=float(separation))


def rho_ladder_step(rho_k: float, l_k: int) -> float:
    """One density increment of the sprinkling ladder, clamped to the valid
    density range (the raw step can exceed it at desk scales)."""
    return min(1.0, rho_k + l_k ** (-1.0 / 16.0))


@dataclass(frozen=True)
class SprinklingReport:
    lhs: Estimate             # joint expectation at the raised density
    rhs_low: float            # conservative lower edge of the product bound
    rhs_point: float
    rho_lo: float
    rho_hi: float
    slack: float
    spot_checked: int
    verdict: str              # "pass" | "fail"


class MonotoneSpotCheckError(AssertionError):
    pass


def _sprinkle_events_worker(args):
    config, params, v, h, anchors = args
    out = []
    for (ax, at) in anchors:
        env = _sweep_env(config, ax - h - 4, ax + 2 * h + 4, depth=at + h + 4)
        out.append(1 if evaluate_event(
            EventSpec("below", v, h, (ax, at)), env, params) else 0)
    return tuple(out)


def sprinkling_check(config: EnvConfig, params: WalkParams, rho_lo: float,
                     rho_hi: float, v: float, h: float, t_sep: float,
                     n_rep: int, slack: float = 0.02, n_spot: int = 32,
                     workers: int = 1) -> SprinklingReport:
    """Product bound with a density sprinkle for a pair of slow-excursion
    events on time-separated boxes.

    The joint expectation at the raised density must not exceed the product
    of the single-event expectations at the base density (plus statistical
    slack).  Both events are non-increasing in the environment, which is
    spot-checked pathwise on coupled density pairs before estimating.
    """
    if rho_hi < rho_lo:
        raise ValueError("sprinkled density must not be below the base")
    if t_sep < h:
        raise ValueError("boxes must be separated in time by at least their height")
    anchors = ((0.0, 0.0), (0.0, float(t_sep)))
    base = replace(config, rho=rho_lo)
    high = replace(config, rho=rho_hi)
    # pathwise monotonicity of the events on coupled pairs
    bad = 0
    for r in range(n_spot):
        lo_ev = _sprinkle_events_worker((replace(base, replica=10_000_000 + r),
                                         params, v, h, anchors))
        hi_ev = _sprinkle_events_worker((replace(high, replica=10_000_000 + r),
                                         params, v, h, anchors))
        if any(l < hh for l, hh in zip(lo_ev, hi_ev)):
            bad += 1
    if bad:
        raise MonotoneSpotCheckError(
            f"{bad}/{n_spot} coupled pairs violated event monotonicity; "
            "the chosen events are not non-increasing in the environment"
        )
    items_hi = [(replace(high, replica=r), params, v, h, anchors) for r in range(n_rep)]
    joint = [a * b for a, b in _pmap(_sprinkle_events_worker, items_hi, workers)]
    lhs = wilson(sum(joint), n_rep, seed=config.seed)
    items_lo = [(replace(base, replica=n_rep + r), params, v, h, anchors)
                for r in range(n_rep)]
    singles = _pmap(_sprinkle_events_worker, items_lo, workers)
    e1 = wilson(sum(s[0] for s in singles), n_rep, seed=config.seed)
    e2 = wilson(sum(s[1] for s in singles), n_rep, seed=config.seed)
    rhs_low = e1.ci_low * e2.ci_low
    rhs_point = e1.value * e2.value
    # the point product serves as a floor so that saturated events pass with
    # zero slack, and a joint event that never fired cannot contradict the
    # product bound at all
    if lhs.value == 0.0:
        verdict = "pass"
    else:
        verdict = "pass" if lhs.ci_high <= max(rhs_low + slack, rhs_point) else "fail"
    return SprinklingReport(lhs=lhs, rhs_low=rhs_low, rhs_point=rhs_point,
                            rho_lo=rho_lo, rho_hi=rho_hi, slack=slack,
                            spot_checked=n_spot, verdict=verdict)


# ---------------------------------------------------------------------------
# coupled-density comparisons


def _coupled_domination_worker(args):
    config_lo, config_hi, params, n_steps = args
    a = walk_positions(config_lo, params, np.array([n_steps], dtype=np.int64))
    b = walk_positions(config_hi, params, np.array([n_steps], dtype=np.int64))
    return int(a[0]) <= int(b[0]), int(a[0]), int(b[0])


def coupled_speed_domination(config: EnvConfig, params: WalkParams,
                             rho_lo: float, rho_hi: float, n_steps: int,
                             n_rep: int, workers: int = 1):
    """Pathwise X_n(rho_lo) <= X_n(rho_hi) counts over coupled replicas."""
    items = []
    for r in range(n_rep):
        items.append((replace(config, rho=rho_lo, replica=r),
                      replace(config, rho=rho_hi, replica=r), params, n_steps))
    res = _pmap(_coupled_domination_worker, items, workers)
    dominated = sum(1 for ok, _, _ in res if ok)
    return dominated, [(a, b) for _, a, b in res]
