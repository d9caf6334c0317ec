"""Experiment orchestration: config validation, runners, CSV/JSON emission.

Configs are strict JSON: unknown keys are rejected with their path, so a
typo cannot silently change an experiment.  Every runner returns rows for
one results CSV with a fixed column set, a human-readable summary, and an
exit code: 0 for a completed run, 2 when a deterministic property that must
hold on every realization failed (those are bugs, not bad luck).

Replica-level work is spread over worker processes; the merge is ordered by
replica index, so the emitted CSV is byte-identical for any worker count.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .environment import (
    EnvConfig,
    Pcrw,
    Ssep,
    dump_snapshot,
    evolve,
    open_env,
    sample_equilibrium,
)
from .estimation import (
    DEFAULT_OFFSETS,
    MonotoneSpotCheckError,
    bracket_speeds,
    clt_check,
    coupled_speed_domination,
    decay_curve,
    estimate_speed,
    event_env_config,
    lateral_cov,
    rho_ladder_step,
    sprinkling_check,
    walk_positions,
)
from .renorm import (
    LemmaViolation,
    TrapParams,
    check_trichotomy,
    delay_dichotomy,
    dump_verdicts,
    env_evaluator,
    is_trapped,
    trapped_implies_slow,
)
from .scales import BoxIndex, EventSpec, dump_ladder, evaluate_event, ladder
from .stats import binom_test_pvalue, wilson
from .walker import WalkParams, crossing_check, dump_trajectory, trajectory
from .estimation import _pmap  # deterministic replica mapping

RESULT_COLUMNS = ("experiment", "rho", "p_bullet", "p_circ", "H_or_n", "v",
                  "value", "ci_low", "ci_high", "n_rep", "seed")

EXPERIMENTS = ("equilibrium", "speed", "ph-curve", "bracket", "clt",
               "symmetric-zero", "decoupling", "sprinkling", "traps",
               "renorm-verify", "monotonicity", "sweep")


class ConfigError(ValueError):
    pass


class PropertyViolation(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# strict config parsing


def _take(d: dict, key: str, kind, path: str, required=True, default=None,
          check=None):
    if key not in d:
        if required:
            raise ConfigError(f"{path}.{key}: missing required field")
        return default
    v = d.pop(key)
    if kind is float and isinstance(v, int):
        v = float(v)
    if not isinstance(v, kind):
        raise ConfigError(f"{path}.{key}: expected {kind.__name__}, got {type(v).__name__}")
    if check is not None and not check(v):
        raise ConfigError(f"{path}.{key}: invalid value {v!r}")
    return v


def _reject_unknown(d: dict, path: str):
    if d:
        raise ConfigError(f"{path}: unknown keys {sorted(d)}")


def _parse_env(block: dict, seed: int, path="env") -> dict:
    b = dict(block)
    kind_name = _take(b, "kind", str, path, check=lambda s: s in ("ssep", "pcrw"))
    rho = _take(b, "rho", float, path)
    if kind_name == "ssep":
        gamma = _take(b, "gamma", float, path, required=False, default=1.0)
        kind = Ssep(gamma=gamma)
    else:
        q = _take(b, "q", float, path, required=False, default=0.5)
        kind = Pcrw(q=q)
    ring = _take(b, "ring_size", int, path, required=False)
    mf = _take(b, "margin_factor", float, path, required=False, default=6.0)
    _reject_unknown(b, path)
    return {"kind": kind, "rho": rho, "ring_size": ring, "margin_factor": mf,
            "seed": seed}


def _parse_walk(block: dict, path="walk") -> WalkParams:
    b = dict(block)
    pb = _take(b, "p_bullet", float, path)
    pc = _take(b, "p_circ", float, path)
    _reject_unknown(b, path)
    try:
        return WalkParams(p_bullet=pb, p_circ=pc)
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from e


def _env_config(env: dict, horizon: float) -> EnvConfig:
    try:
        return EnvConfig(kind=env["kind"], rho=env["rho"], horizon=horizon,
                         seed=env["seed"], ring_size=env["ring_size"],
                         margin_factor=env["margin_factor"])
    except ValueError as e:
        raise ConfigError(f"env: {e}") from e


def _event_config(env: dict, h_max: float) -> EnvConfig:
    cfg = event_env_config(env["kind"], env["rho"], env["seed"], h_max,
                           env["margin_factor"])
    if env["ring_size"] is not None and env["ring_size"] > cfg.ring_size:
        cfg = replace(cfg, ring_size=env["ring_size"])
    return cfg


def _offsets(params: dict, path: str):
    raw = _take(params, "offsets", list, path, required=False)
    if raw is None:
        return DEFAULT_OFFSETS
    out = []
    for i, pair in enumerate(raw):
        if (not isinstance(pair, list)) or len(pair) != 2:
            raise ConfigError(f"{path}.offsets[{i}]: expected [x, t]")
        x, t = float(pair[0]), float(pair[1])
        if abs(x) + abs(t) > 1.0:
            raise ConfigError(f"{path}.offsets[{i}]: outside the unit shift cell")
        out.append((x, t))
    return tuple(out)


def _row(experiment, env, walk, h_or_n, v, est, n_rep, seed):
    return {
        "experiment": experiment,
        "rho": env["rho"],
        "p_bullet": walk.p_bullet if walk else "",
        "p_circ": walk.p_circ if walk else "",
        "H_or_n": h_or_n,
        "v": v,
        "value": est.value if hasattr(est, "value") else est,
        "ci_low": est.ci_low if hasattr(est, "ci_low") else "",
        "ci_high": est.ci_high if hasattr(est, "ci_high") else "",
        "n_rep": n_rep,
        "seed": seed,
    }


# ---------------------------------------------------------------------------
# runners (each returns rows, summary lines, exit code, extra file writers)


def run_speed(env, walk, params, seed, workers, outdir):
    p = dict(params)
    n_steps = _take(p, "n_steps", int, "params", check=lambda n: n >= 1)
    n_rep = _take(p, "n_rep", int, "params", check=lambda n: n >= 2)
    dump = _take(p, "dump_trajectory", bool, "params", required=False, default=False)
    _reject_unknown(p, "params")
    cfg = _env_config(env, float(n_steps))
    est = estimate_speed(cfg, walk, n_steps, n_rep, workers)
    rows = [_row("speed", env, walk, n_steps, "", est, n_rep, seed)]
    summary = [f"speed over {n_rep} replicas of {n_steps} steps: "
               f"{est.value:.5f} [{est.ci_low:.5f}, {est.ci_high:.5f}]"]
    extras = []
    if dump and outdir is not None:
        tr = trajectory((0, 0), open_env(replace(cfg, replica=0)), walk,
                        min(n_steps, 4096))
        meta = {"seed": seed, "rho": env["rho"], "p_bullet": walk.p_bullet,
                "p_circ": walk.p_circ}
        extras.append(("trajectory.csv", lambda path: dump_trajectory(
            tr, path, path.with_suffix(".json"), meta)))
    return rows, summary, 0, extras


def run_symmetric_zero(env, walk, params, seed, workers, outdir):
    if not isinstance(env["kind"], Ssep):
        raise ConfigError("the symmetric zero-speed run is an exclusion experiment")
    if env["rho"] != 0.5 or abs(walk.p_bullet + walk.p_circ - 1.0) > 1e-12:
        raise ConfigError("symmetric-zero needs rho = 1/2 and p_circ = 1 - p_bullet")
    rows, summary, code, extras = run_speed(env, walk, params, seed, workers, outdir)
    rows = [dict(r, experiment="symmetric-zero") for r in rows]
    est_ok = rows[0]["ci_low"] <= 0.0 <= rows[0]["ci_high"]
    summary.append(f"zero inside the interval: {'yes' if est_ok else 'NO'}")
    return rows, summary, code, extras


def run_clt(env, walk, params, seed, workers, outdir):
    p = dict(params)
    n_steps = _take(p, "n_steps", int, "params", check=lambda n: n >= 2)
    n_rep = _take(p, "n_rep", int, "params", check=lambda n: n >= 8)
    t_grid = _take(p, "t_grid", list, "params", required=False)
    force = _take(p, "force", bool, "params", required=False, default=False)
    _reject_unknown(p, "params")
    ts = [int(t) for t in t_grid] if t_grid else [n_steps, 2 * n_steps]
    cfg = _env_config(env, float(max(ts)))
    rep = clt_check(cfg, walk, n_steps, n_rep, ts, force, workers)
    rows = [_row("clt-speed", env, walk, n_steps, "", rep.speed, n_rep, seed)]
    for t, var in rep.variances:
        rows.append(_row("clt-variance-per-step", env, walk, t, "", var / t, n_rep, seed))
    rows.append(_row("clt-ks-pvalue", env, walk, n_steps, "", rep.ks_pvalue, n_rep, seed))
    for i, r in enumerate(rep.scaling_ratios):
        rows.append(_row("clt-variance-ratio", env, walk, ts[i], "", r, n_rep, seed))
    summary = [
        f"speed {rep.speed.value:.5f} [{rep.speed.ci_low:.5f}, {rep.speed.ci_high:.5f}]",
        "variance per step: " + ", ".join(f"t={t}: {v / t:.4f}" for t, v in rep.variances),
        f"KS normality p-value: {rep.ks_pvalue:.4f}",
        "doubling variance ratios: " + ", ".join(f"{r:.3f}" for r in rep.scaling_ratios),
    ]
    return rows, summary, 0, []


def run_ph_curve(env, walk, params, seed, workers, outdir):
    p = dict(params)
    direction = _take(p, "direction", str, "params",
                      check=lambda s: s in ("above", "below"))
    v = _take(p, "v", float, "params")
    h_list = _take(p, "H_list", list, "params", check=lambda l: len(l) >= 4)
    n_rep = _take(p, "n_rep", int, "params", check=lambda n: n >= 30)
    offs = _offsets(p, "params")
    refine = _take(p, "refine", int, "params", required=False, default=0)
    _reject_unknown(p, "params")
    cfg = _event_config(env, max(h_list))
    curve = decay_curve(direction, v, cfg, walk, h_list, n_rep, offs, workers)
    rows = [_row("ph-curve", env, walk, h, v, est, n_rep, seed)
            for h, est in curve.points]
    summary = [f"{direction}(v={v}) over H={sorted(h_list)}: verdict {curve.verdict}",
               "points: " + ", ".join(f"H={int(h)}: {e.value:.4f}" for h, e in curve.points)]
    return rows, summary, 0, []


def run_bracket(env, walk, params, seed, workers, outdir):
    p = dict(params)
    vg = _take(p, "v_grid", dict, "params", required=False)
    if vg is None:
        grid = [round(-1.0 + 0.05 * i, 10) for i in range(41)]
    else:
        g = dict(vg)
        lo = _take(g, "lo", float, "params.v_grid")
        hi = _take(g, "hi", float, "params.v_grid")
        st = _take(g, "step", float, "params.v_grid")
        _reject_unknown(g, "params.v_grid")
        n = int(round((hi - lo) / st))
        grid = [round(lo + i * st, 10) for i in range(n + 1)]
    h_list = _take(p, "H_list", list, "params", check=lambda l: len(l) >= 4)
    n_rep = _take(p, "n_rep", int, "params", check=lambda n: n >= 30)
    offs = _offsets(p, "params")
    _reject_unknown(p, "params")
    cfg = _event_config(env, max(h_list))
    bracket, above, below = bracket_speeds(cfg, walk, grid, h_list, n_rep, offs, workers)
    rows = [
        _row("bracket-lo", env, walk, int(max(h_list)), bracket.v_lo, bracket.v_lo, n_rep, seed),
        _row("bracket-hi", env, walk, int(max(h_list)), bracket.v_hi, bracket.v_hi, n_rep, seed),
    ]
    for v in grid:
        rows.append(_row("bracket-above-verdict", env, walk, int(max(h_list)), v,
                         {"decaying": 1.0, "flat": 0.0, "inconclusive": 0.5}[above[v]],
                         n_rep, seed))
    summary = [f"speed bracket [{bracket.v_lo:.3f}, {bracket.v_hi:.3f}] "
               f"at grid step {bracket.grid_step}"]
    return rows, summary, 0, []


def run_equilibrium(env, walk, params, seed, workers, outdir):
    p = dict(params)
    evolve_to = _take(p, "evolve_to", float, "params", check=lambda t: t >= 0)
    n_rep = _take(p, "n_rep", int, "params", check=lambda n: n >= 100)
    site = _take(p, "site", int, "params", required=False, default=0)
    dump = _take(p, "dump_snapshot", bool, "params", required=False, default=False)
    _reject_unknown(p, "params")
    cfg = _env_config(env, max(evolve_to, 1.0))
    st0 = sample_equilibrium(cfg)
    frac0 = float(np.mean(st0.occupancy > 0))
    items = [(replace(cfg, replica=r), site, evolve_to) for r in range(n_rep)]
    occ = _pmap(_equilibrium_site_worker, items, workers)
    k = sum(1 for c in occ if c > 0)
    lam = cfg.lam
    p_occ = env["rho"] if isinstance(env["kind"], Ssep) else 1.0 - math.exp(-lam)
    pval = binom_test_pvalue(k, n_rep, p_occ)
    est = wilson(k, n_rep, seed=seed)
    rows = [
        _row("equilibrium-occupied-frac-t0", env, None, 0, "", frac0, 1, seed),
        _row("equilibrium-site-occupied", env, None, evolve_to, "", est, n_rep, seed),
        _row("equilibrium-binomial-pvalue", env, None, evolve_to, "", pval, n_rep, seed),
    ]
    summary = [
        f"time-0 occupied fraction over the window: {frac0:.4f}",
        f"P(site {site} occupied at t={evolve_to}): {est.value:.4f} "
        f"[{est.ci_low:.4f}, {est.ci_high:.4f}], two-sided binomial p = {pval:.4f}",
    ]
    extras = []
    if dump and outdir is not None:
        st = evolve(st0, cfg, evolve_to)
        extras.append(("snapshot.csv", lambda path: dump_snapshot(
            st, cfg, path, path.with_suffix(".json"))))
    return rows, summary, 0, extras


def _equilibrium_site_worker(args):
    cfg, site, t = args
    return open_env(cfg).count_at(site, t)


def run_decoupling(env, walk, params, seed, workers, outdir):
    p = dict(params)
    h = _take(p, "H", float, "params", check=lambda x: x >= 16)
    d_far = _take(p, "D_far", int, "params", required=False,
                  default=int(math.ceil(h ** 0.75)))
    width = _take(p, "strip_width", int, "params", required=False, default=8)
    n_rep = _take(p, "n_rep", int, "params", check=lambda n: n >= 200)
    n_batches = _take(p, "n_batches", int, "params", required=False, default=50)
    _reject_unknown(p, "params")
    cfg = _env_config(env, h + 2.0)
    far = lateral_cov(cfg, h, d_far, n_rep, "far", width, None, n_batches, workers)
    near = lateral_cov(cfg, h, 0, n_rep, "near", width, None, n_batches, workers)
    rows = [
        _row("decoupling-far-cov", env, None, int(h), d_far, far.cov, n_rep, seed),
        _row("decoupling-near-cov", env, None, int(h), 0, near.cov, n_rep, seed),
    ]
    summary = [
        f"far arm  (D={d_far}): cov {far.cov.value:+.5f} "
        f"[{far.cov.ci_low:+.5f}, {far.cov.ci_high:+.5f}]",
        f"near arm (D=0):  cov {near.cov.value:+.5f} "
        f"[{near.cov.ci_low:+.5f}, {near.cov.ci_high:+.5f}]",
    ]
    return rows, summary, 0, []


def run_sprinkling(env, walk, params, seed, workers, outdir):
    p = dict(params)
    l_k = _take(p, "L_k", int, "params", check=lambda x: x >= 16)
    rho_base = _take(p, "rho_base", float, "params")
    v = _take(p, "v", float, "params")
    h = _take(p, "H", float, "params", required=False, default=float(l_k))
    sep = _take(p, "t_sep_factor", float, "params", required=False, default=2.0)
    n_rep = _take(p, "n_rep", int, "params", check=lambda n: n >= 50)
    slack = _take(p, "slack", float, "params", required=False, default=0.02)
    n_spot = _take(p, "n_spot", int, "params", required=False, default=32)
    _reject_unknown(p, "params")
    rho_hi = rho_ladder_step(rho_base, l_k)
    t_sep = sep * h
    base = _event_config(dict(env, rho=rho_base), h)
    cfg = replace(base, horizon=t_sep + h + 8.0,
                  ring_size=max(base.ring_size, 2 * int(2 * h + t_sep + 700)))
    try:
        rep = sprinkling_check(cfg, walk, rho_base, rho_hi, v, h, t_sep, n_rep,
                               slack, n_spot, workers)
    except MonotoneSpotCheckError as e:
        return [], [f"sprinkling aborted: {e}"], 2, []
    rows = [
        _row("sprinkling-lhs", env, walk, int(h), v, rep.lhs, n_rep, seed),
        _row("sprinkling-rhs-point", env, walk, int(h), v, rep.rhs_point, n_rep, seed),
        _row("sprinkling-rhs-low", env, walk, int(h), v, rep.rhs_low, n_rep, seed),
    ]
    summary = [
        f"rho ladder: {rho_base} -> {rho_hi} (step L_k^(-1/16), L_k = {l_k}, clamped at 1)",
        f"joint at raised density: {rep.lhs.value:.4f} "
        f"[{rep.lhs.ci_low:.4f}, {rep.lhs.ci_high:.4f}]",
        f"product bound at base density: point {rep.rhs_point:.4f}, "
        f"conservative lower edge {rep.rhs_low:.4f}",
        f"verdict: {rep.verdict} (slack {slack}, {rep.spot_checked} coupled "
        "monotonicity spot checks)",
    ]
    return rows, summary, 0 if rep.verdict == "pass" else 2, []


def run_traps(env, walk, params, seed, workers, outdir):
    p = dict(params)
    k_hor = _take(p, "K", float, "params", check=lambda x: x >= 1)
    v_minus = _take(p, "v_minus", float, "params")
    v_plus = _take(p, "v_plus", float, "params")
    r = _take(p, "r", int, "params", required=False, default=2)
    n_samples = _take(p, "n_samples", int, "params", check=lambda n: n >= 50)
    _reject_unknown(p, "params")
    tp1 = TrapParams.from_speeds(v_minus, v_plus, k_hor, r)
    tp2 = TrapParams.from_speeds(v_minus, v_plus, 2 * k_hor, r)
    horizon = 2 * k_hor * (r + 1) + 8
    half = int(2 * k_hor * (r + 2) + 700)
    base = _env_config(dict(env, ring_size=max(env["ring_size"] or 0, 2 * half)),
                       horizon)
    items = [(replace(base, replica=rr), walk, tp1, tp2) for rr in range(n_samples)]
    results = _pmap(_trap_worker, items, workers)
    verdict_rows = []
    k1 = k2 = slow_checked = slow_ok = 0
    code = 0
    for rr, (t1, t2, wit, slow) in enumerate(results):
        k1 += t1
        k2 += t2
        verdict_rows.append((rr, "trapped-K", "yes" if t1 else "no", wit))
        if t1:
            slow_checked += 1
            slow_ok += 1 if slow else 0
            verdict_rows.append((rr, "trapped-implies-slow",
                                 "holds" if slow else "VIOLATED", wit))
            if not slow:
                code = 2
    est1 = wilson(k1, n_samples, seed=seed)
    est2 = wilson(k2, n_samples, seed=seed)
    rows = [
        _row("trap-frequency", env, walk, int(k_hor), "", est1, n_samples, seed),
        _row("trap-frequency", env, walk, int(2 * k_hor), "", est2, n_samples, seed),
        _row("trapped-implies-slow-holds", env, walk, int(k_hor), "",
             slow_ok / max(slow_checked, 1), slow_checked, seed),
    ]
    summary = [
        f"trap frequency at K={k_hor:g}: {est1.value:.3f} "
        f"[{est1.ci_low:.3f}, {est1.ci_high:.3f}]",
        f"trap frequency at K={2 * k_hor:g}: {est2.value:.3f} "
        f"[{est2.ci_low:.3f}, {est2.ci_high:.3f}]",
        f"trapped-implies-slow: {slow_ok}/{slow_checked}",
    ]
    extras = [("verdicts.csv", lambda path: dump_verdicts(verdict_rows, path))]
    return rows, summary, code, extras


def _trap_worker(args):
    cfg, walk, tp1, tp2 = args
    env = open_env(cfg)
    t1, wit = is_trapped((0.0, 0.0), tp1, env, walk)
    t2, _ = is_trapped((0.0, 0.0), tp2, env, walk)
    slow = trapped_implies_slow((0.0, 0.0), tp1, env, walk) if t1 else True
    return int(t1), int(t2), wit, slow


def run_renorm_verify(env, walk, params, seed, workers, outdir):
    p = dict(params)
    l0 = _take(p, "L0", int, "params", check=lambda x: x >= 16)
    depth = _take(p, "depth", int, "params", required=False, default=2)
    h = _take(p, "h", int, "params", required=False, default=1)
    v_min = _take(p, "v_min", float, "params")
    v_max = _take(p, "v_max", float, "params")
    n_tri = _take(p, "n_samples", int, "params", check=lambda n: n >= 1)
    dich = _take(p, "dichotomy", dict, "params", required=False)
    comp = _take(p, "complement", dict, "params", required=False)
    _reject_unknown(p, "params")
    lad = ladder(l0, depth)
    code = 0
    verdict_rows = []
    summary = []
    # trichotomy over fresh realizations at an admissible scale
    h_box = h * lad.scale(1)
    cfg_t = _event_config(env, float(h_box))
    counts = {"a_max": 0, "pair": 0, "slow_parent": 0}
    for rr in range(n_tri):
        e = open_env(replace(cfg_t, replica=rr))
        try:
            v = check_trichotomy(BoxIndex(h=h, k=1, anchor=(0.0, 0.0)), lad,
                                 v_min, v_max, env_evaluator(e, walk))
        except LemmaViolation as exc:
            verdict_rows.append((rr, "trichotomy", "MISSING", None))
            summary.append(f"trichotomy violation: {exc}")
            code = 2
            continue
        counts[v.kind] += 1
        wit = None if v.child is None else v.child.anchor
        verdict_rows.append((rr, "trichotomy", v.kind, wit))
    rows = [_row("trichotomy-verdicts", env, walk, h_box, "",
                 sum(counts.values()) / n_tri, n_tri, seed)]
    summary.append(f"trichotomy verdicts over {n_tri} realizations: {counts}")
    # delay dichotomy
    if dich is not None:
        d = dict(dich)
        k_hor = _take(d, "K", float, "params.dichotomy")
        v_minus = _take(d, "v_minus", float, "params.dichotomy")
        v_plus = _take(d, "v_plus", float, "params.dichotomy")
        r = _take(d, "r", int, "params.dichotomy", required=False, default=2)
        n_d = _take(d, "n_samples", int, "params.dichotomy")
        _reject_unknown(d, "params.dichotomy")
        tp = TrapParams.from_speeds(v_minus, v_plus, k_hor, r)
        half = int(k_hor * (r + 2) + 700)
        cfg_d = _env_config(dict(env, ring_size=max(env["ring_size"] or 0, 2 * half)),
                            k_hor * (r + 1) + 8)
        items = [(replace(cfg_d, replica=rr), walk, tp) for rr in range(n_d)]
        res = _pmap(_dichotomy_worker, items, workers)
        met = {"speedup": 0, "delayed": 0}
        unmet = 0
        for rr, verdict in enumerate(res):
            if verdict.kind == "precondition_unmet":
                unmet += 1
            else:
                met[verdict.kind] += 1
            verdict_rows.append((rr, "delay-dichotomy", verdict.kind, verdict.witness))
        n_met = n_d - unmet
        rows.append(_row("dichotomy-verdicts", env, walk, int(k_hor), "",
                         (met["speedup"] + met["delayed"]) / max(n_met, 1),
                         n_met, seed))
        summary.append(
            f"delay dichotomy over {n_d} realizations: {met}, {unmet} precondition-unmet")
    # event-level complement identity
    if comp is not None:
        c = dict(comp)
        h_c = _take(c, "H", float, "params.complement")
        n_c = _take(c, "n_samples", int, "params.complement")
        _reject_unknown(c, "params.complement")
        cfg_c = _event_config(env, h_c)
        bad = 0
        for rr in range(n_c):
            e = open_env(replace(cfg_c, replica=rr))
            u1 = -1.0 + 2.0 * ((rr * 2654435761) % 997) / 997.0
            v1, v2 = u1, u1 + 0.05 + ((rr * 40503) % 101) / 101.0
            a = evaluate_event(EventSpec("above", v1, h_c, (0.0, 0.0)), e, walk)
            b = evaluate_event(EventSpec("below", v2, h_c, (0.0, 0.0)), e, walk)
            if not (a or b):
                bad += 1
                verdict_rows.append((rr, "complement", "VIOLATED", None))
        if bad:
            code = 2
        rows.append(_row("complement-holds", env, walk, int(h_c), "",
                         (n_c - bad) / n_c, n_c, seed))
        summary.append(f"complement identity: {n_c - bad}/{n_c}")
    extras = [
        ("ladder.csv", lambda path: dump_ladder(lad, path)),
        ("verdicts.csv", lambda path: dump_verdicts(verdict_rows, path)),
    ]
    return rows, summary, code, extras


def _dichotomy_worker(args):
    cfg, walk, tp = args
    return delay_dichotomy((0.0, 0.0), tp, open_env(cfg), walk)


def run_monotonicity(env, walk, params, seed, workers, outdir):
    p = dict(params)
    n_pairs = _take(p, "n_pairs", int, "params", check=lambda n: n >= 10)
    horizon = _take(p, "horizon", float, "params", required=False, default=48.0)
    _reject_unknown(p, "params")
    cfg = _env_config(dict(env, ring_size=max(env["ring_size"] or 0,
                                              2 * int(3 * horizon + 700))),
                      horizon + 4)
    items = [(replace(cfg, replica=rr), walk, horizon, rr) for rr in range(n_pairs)]
    res = _pmap(_monotonicity_worker, items, workers)
    names = ("same-row-order", "cone-order", "coalescence", "env-domination",
             "walker-domination")
    totals = {nm: 0 for nm in names}
    for oks in res:
        for nm, ok in zip(names, oks):
            totals[nm] += 1 if ok else 0
    code = 0 if all(totals[nm] == n_pairs for nm in names) else 2
    rows = [_row(f"monotonicity-{nm}", env, walk, int(horizon), "",
                 totals[nm] / n_pairs, n_pairs, seed) for nm in names]
    summary = [f"{nm}: {totals[nm]}/{n_pairs}" for nm in names]
    return rows, summary, code, extras_none()


def extras_none():
    return []


def _monotonicity_worker(args):
    cfg, walk, horizon, rr = args
    from .environment import couple

    h = int(horizon)
    g = np.random.default_rng(rr)  # geometry only; all randomness is keyed
    e1 = open_env(cfg)
    # same-row ordering
    xa = 2 * int(g.integers(-8, 8))
    xb = xa - 2 * int(g.integers(1, 6))
    ok1 = crossing_check((xa, 0.0), (xb, 0.0), e1, walk, h)
    # cone ordering with dyadic fractional anchors
    t1 = int(g.integers(0, 8)) / 4.0
    t0 = int(g.integers(0, 8)) / 4.0
    x1 = 2 * int(g.integers(-6, 6)) + int(g.integers(0, 4)) / 4.0
    x0 = x1 - abs(t0 - t1) - int(g.integers(1, 5))
    ok2 = crossing_check((x1, t1), (x0, t0), e1, walk, h)
    # coalescence permanence on a shared grid
    ta = trajectory((0, 0.0), e1, walk, h)
    tb = trajectory((2, 0.0), e1, walk, h)
    ok3 = True
    merged = False
    for n in range(h + 1):
        pa, pb = ta.position(n), tb.position(n)
        if merged and pa != pb:
            ok3 = False
            break
        if pa == pb:
            merged = True
    # sitewise environment domination on coupled densities
    rho = cfg.rho
    rho_hi = min(0.95, rho + 0.3)
    lo_env, hi_env = couple(replace(cfg, rho=rho), replace(cfg, rho=rho_hi))
    ok4 = True
    for _ in range(20):
        x = int(g.integers(-h, h))
        t = float(g.integers(0, int(horizon)))
        if lo_env.count_at(x, t) > hi_env.count_at(x, t):
            ok4 = False
            break
    # pathwise walker domination under the density coupling
    ts = np.arange(h + 1, dtype=np.int64)
    pos_lo = walk_positions(replace(cfg, rho=rho), walk, ts)
    pos_hi = walk_positions(replace(cfg, rho=rho_hi), walk, ts)
    ok5 = bool(np.all(pos_lo <= pos_hi))
    return ok1, ok2, ok3, ok4, ok5


def run_sweep(env, walk, params, seed, workers, outdir):
    p = dict(params)
    parameter = _take(p, "parameter", str, "params",
                      check=lambda s: s in ("rho", "p_bullet", "p_circ"))
    values = _take(p, "values", list, "params", check=lambda l: len(l) >= 1)
    n_steps = _take(p, "n_steps", int, "params")
    n_rep = _take(p, "n_rep", int, "params")
    _reject_unknown(p, "params")
    values = [float(v) for v in values]
    if values != sorted(values):
        raise ConfigError("params.values: sweep values must be sorted")
    rows = []
    summary = []
    pair_lines = []
    for v in values:
        env_v = dict(env)
        walk_v = walk
        if parameter == "rho":
            env_v["rho"] = v
        elif parameter == "p_bullet":
            walk_v = WalkParams(p_bullet=v, p_circ=walk.p_circ)
        else:
            walk_v = WalkParams(p_bullet=walk.p_bullet, p_circ=v)
        cfg = _env_config(env_v, float(n_steps))
        est = estimate_speed(cfg, walk_v, n_steps, n_rep, workers)
        rows.append(_row(f"sweep-{parameter}", env_v, walk_v, n_steps, v, est,
                         n_rep, seed))
        summary.append(f"{parameter}={v}: speed {est.value:.5f} "
                       f"[{est.ci_low:.5f}, {est.ci_high:.5f}]")
    code = 0
    if parameter == "rho":
        cfg = _env_config(env, float(n_steps))
        for lo, hi in zip(values, values[1:]):
            dominated, _ = coupled_speed_domination(cfg, walk, lo, hi, n_steps,
                                                    n_rep, workers)
            pair_lines.append((lo, hi, n_rep, dominated))
            summary.append(f"coupled domination {lo} <= {hi}: {dominated}/{n_rep}")
            if dominated != n_rep:
                code = 2
    extras = []
    if pair_lines:
        def write_pairs(path):
            with open(path, "w") as f:
                f.write("parameter,value_lo,value_hi,n_pairs,dominated\n")
                for lo, hi, n, dom in pair_lines:
                    f.write(f"rho,{lo!r},{hi!r},{n},{dom}\n")

        extras.append(("coupling.csv", write_pairs))
    return rows, summary, code, extras


RUNNERS = {
    "speed": run_speed,
    "symmetric-zero": run_symmetric_zero,
    "clt": run_clt,
    "ph-curve": run_ph_curve,
    "bracket": run_bracket,
    "equilibrium": run_equilibrium,
    "decoupling": run_decoupling,
    "sprinkling": run_sprinkling,
    "traps": run_traps,
    "renorm-verify": run_renorm_verify,
    "monotonicity": run_monotonicity,
    "sweep": run_sweep,
}


# ---------------------------------------------------------------------------
# entry point


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(rows, path):
    with open(path, "w") as f:
        f.write(",".join(RESULT_COLUMNS) + "\n")
        for r in rows:
            f.write(",".join(_fmt(r[c]) for c in RESULT_COLUMNS) + "\n")


def run_experiment(config: dict, outdir=None, workers: int = 1,
                   seed_override=None):
    """Validate and run one experiment; returns (rows, summary, exit code).

    When outdir is given, writes results.csv, manifest.json, summary.txt and
    any experiment-specific artifacts there.
    """
    from pathlib import Path

    cfg = json.loads(json.dumps(config))  # defensive copy
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    name = _take(cfg, "experiment", str, "config",
                 check=lambda s: s in EXPERIMENTS)
    seed = _take(cfg, "seed", int, "config", check=lambda s: 0 <= s < 2 ** 64)
    if seed_override is not None:
        seed = seed_override
    cfg_workers = _take(cfg, "workers", int, "config", required=False)
    if cfg_workers is not None and workers == 1:
        workers = cfg_workers
    env_block = _take(cfg, "env", dict, "config")
    walk_block = _take(cfg, "walk", dict, "config", required=False)
    params = _take(cfg, "params", dict, "config", required=False, default={})
    _reject_unknown(cfg, "config")
    env = _parse_env(env_block, seed)
    walk = _parse_walk(walk_block) if walk_block is not None else None
    if walk is None and name not in ("equilibrium", "decoupling"):
        raise ConfigError("config.walk: required for this experiment")
    t0 = time.time()
    rows, summary, code, extras = RUNNERS[name](env, walk, dict(params), seed,
                                                workers, outdir)
    wall = time.time() - t0
    if outdir is not None:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        write_rows(rows, out / "results.csv")
        manifest = {
            "experiment": name,
            "config": config,
            "seed": seed,
            "version": __version__,
            "wall_time_s": wall,
            "workers": workers,
            "exit_code": code,
        }
        with open(out / "manifest.json", "w") as f:
            json.dump(manifest, f, indent=2, default=str)
            f.write("\n")
        with open(out / "summary.txt", "w") as f:
            f.write(f"{name} (seed {seed}, {wall:.1f}s)\n")
            for line in summary:
                f.write(line + "\n")
        for fname, writer in extras:
            writer(out / fname)
    return rows, summary, code
