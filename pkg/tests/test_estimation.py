import numpy as np
import pytest

from dynrwre.environment import EnvConfig, Pcrw, Ssep
from dynrwre.estimation import (
    DEFAULT_OFFSETS,
    bracket_speeds,
    clt_check,
    coupled_speed_domination,
    decay_curve,
    estimate_ph,
    estimate_speed,
    event_env_config,
    interval_extremes_ladder,
    lateral_cov,
    rho_ladder_step,
    sprinkling_check,
    walk_positions,
)
from dynrwre.walker import WalkParams

OFF2 = ((0.0, 0.0), (0.5, -0.5))


def test_offsets_inside_shift_cell():
    for x, t in DEFAULT_OFFSETS:
        assert abs(x) + abs(t) <= 1.0


def test_degenerate_speed_oracle():
    cfg = EnvConfig(kind=Ssep(), rho=1.0, horizon=1000, seed=2024)
    est = estimate_speed(cfg, WalkParams(0.7, 0.7), 1000, 200, workers=2)
    assert est.contains(0.4)
    # rho = 1 with p_bullet = 0.9: constant environment oracle
    est = estimate_speed(cfg, WalkParams(0.9, 0.5), 1000, 200, workers=2)
    assert est.contains(0.8)


def test_pcrw_walk_positions_run():
    cfg = EnvConfig(kind=Pcrw(q=0.5), rho=0.5, horizon=64, seed=5, ring_size=512)
    out = walk_positions(cfg, WalkParams(0.8, 0.2), np.array([16, 64]))
    assert abs(int(out[1])) <= 64 and (int(out[1]) + 64) % 2 == 0


def test_ph_trivial_bounds_exact():
    cfg = event_env_config(Ssep(), 0.5, 3, 32)
    p = WalkParams(0.8, 0.2)
    hi = estimate_ph("above", 1.5, 32, cfg, p, 40, OFF2, workers=1)
    assert hi.value == 0.0
    lo = estimate_ph("below", 1.5, 32, cfg, p, 40, OFF2, workers=1)
    assert lo.value == 1.0
    with pytest.raises(ValueError):
        estimate_ph("above", 0.5, 32, cfg, p, 10, OFF2)
    with pytest.raises(ValueError):
        estimate_ph("above", 0.5, 2, cfg, p, 40, OFF2)


def test_ph_monotone_in_v_on_shared_realizations():
    cfg = event_env_config(Ssep(), 0.5, 7, 32)
    p = WalkParams(0.8, 0.2)
    vals = [estimate_ph("above", v, 32, cfg, p, 60, OFF2, workers=2).value
            for v in (-0.5, -0.2, 0.0, 0.2, 0.5)]
    assert vals == sorted(vals, reverse=True)


def test_environment_free_oracle_agreement():
    """With p_bullet = p_circ the environment is irrelevant: frequencies on a
    random environment must agree with the all-occupied oracle."""
    p = WalkParams(0.5, 0.5)
    est_env = estimate_ph("above", 0.25, 64,
                          event_env_config(Ssep(), 0.5, 11, 64), p, 150, OFF2,
                          workers=2)
    est_free = estimate_ph("above", 0.25, 64,
                           event_env_config(Ssep(), 1.0, 12, 64), p, 150, OFF2,
                           workers=2)
    assert est_env.ci_low <= est_free.ci_high and est_free.ci_low <= est_env.ci_high


def test_decay_curve_verdicts():
    p6 = WalkParams(0.6, 0.6)
    cfg = event_env_config(Ssep(), 1.0, 13, 256)
    dec = decay_curve("above", 0.5, cfg, p6, [32, 64, 128, 256], 100, OFF2, workers=2)
    assert dec.verdict == "decaying"
    flat = decay_curve("above", 0.1, cfg, p6, [32, 64, 128, 256], 100, OFF2, workers=2)
    assert flat.verdict == "flat"
    zero = decay_curve("above", 1.2, cfg, p6, [32, 64, 128, 256], 100, OFF2, workers=2)
    assert zero.verdict == "decaying" and all(e.value == 0.0 for _, e in zero.points)
    with pytest.raises(ValueError):
        decay_curve("above", 0.5, cfg, p6, [32, 64], 100, OFF2)


def test_extremes_ladder_subset_consistency():
    cfg = event_env_config(Ssep(), 0.5, 17, 64)
    p = WalkParams(0.8, 0.2)
    ext = interval_extremes_ladder((0.0, 0.0), [16, 64], cfg, p)
    lo16, hi16 = ext[16.0]
    lo64, hi64 = ext[64.0]
    assert -16 <= lo16 <= hi16 <= 16
    assert -64 <= lo64 <= hi64 <= 64


def test_clt_refuses_zero_speed_without_force():
    cfg = EnvConfig(kind=Ssep(), rho=0.5, horizon=600, seed=5)
    with pytest.raises(ValueError):
        clt_check(cfg, WalkParams(0.8, 0.2), 300, 60, workers=2)
    rep = clt_check(cfg, WalkParams(0.8, 0.2), 300, 60, force=True, workers=2)
    assert rep.n == 60


def test_clt_degenerate_variance():
    cfg = EnvConfig(kind=Ssep(), rho=1.0, horizon=2000, seed=12)
    rep = clt_check(cfg, WalkParams(0.9, 0.9), 1000, 250, workers=2)
    var_per_step = dict(rep.variances)[1000] / 1000
    assert abs(var_per_step - 0.36) < 0.08
    assert rep.ks_pvalue > 0.01


def test_bracket_contains_oracle_speed():
    cfg = event_env_config(Ssep(), 1.0, 6, 256)
    grid = [round(-1.0 + 0.05 * i, 10) for i in range(41)]
    br, above, below = bracket_speeds(cfg, WalkParams(0.7, 0.7), grid,
                                      [32, 64, 128, 256], 80, OFF2, workers=2)
    assert br.v_lo <= 0.4 <= br.v_hi
    with pytest.raises(ValueError):
        bracket_speeds(cfg, WalkParams(0.7, 0.7), [0.0, 0.5, 1.0],
                       [32, 64, 128, 256], 80, OFF2)


def test_lateral_cov_same_box_is_bernoulli_variance():
    cfg = EnvConfig(kind=Ssep(), rho=0.5, horizon=70, seed=3)
    rep = lateral_cov(cfg, 64, 0, 300, arm="near", workers=2)
    # identical indicators would give q(1-q); facing strips share one site
    # and stay strongly positively correlated
    assert rep.cov.ci_low > 0.0
    far = lateral_cov(cfg, 64, 32, 300, arm="far", workers=2)
    assert far.cov.contains(0.0) or abs(far.cov.value) < 0.05
    with pytest.raises(ValueError):
        lateral_cov(cfg, 64, 8, 300, arm="far")
    with pytest.raises(ValueError):
        lateral_cov(cfg, 64, 8, 300, arm="near")


def test_rho_ladder_clamps():
    assert rho_ladder_step(0.4, 256) == 1.0
    assert rho_ladder_step(0.4, 10 ** 16) == 0.5
    v = rho_ladder_step(0.4, 10 ** 18)
    assert 0.4 < v < 0.5


def test_sprinkling_saturated_events_pass_with_zero_slack():
    cfg = EnvConfig(kind=Ssep(), rho=0.4, horizon=80, seed=9, ring_size=1024)
    p = WalkParams(0.8, 0.2)
    # below v=1.5 is surely true: both sides are exactly one
    rep = sprinkling_check(cfg, p, 0.4, 0.9, v=1.5, h=16.0, t_sep=32.0,
                           n_rep=60, slack=0.0, n_spot=6, workers=2)
    assert rep.verdict == "pass" and rep.lhs.value == 1.0 and rep.rhs_point == 1.0
    # below v=-1.5 is surely false: zero against zero
    rep = sprinkling_check(cfg, p, 0.4, 0.9, v=-1.5, h=16.0, t_sep=32.0,
                           n_rep=60, slack=0.0, n_spot=6, workers=2)
    assert rep.verdict == "pass" and rep.lhs.value == 0.0


def test_coupled_speed_domination_exact():
    cfg = EnvConfig(kind=Ssep(), rho=0.5, horizon=200, seed=4)
    dominated, pairs = coupled_speed_domination(cfg, WalkParams(0.8, 0.2),
                                                0.3, 0.7, 200, 50, workers=2)
    assert dominated == 50
