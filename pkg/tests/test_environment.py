import numpy as np
import pytest

from dynrwre.environment import (
    EnvConfig,
    Pcrw,
    Ssep,
    WindowError,
    couple,
    default_ring_size,
    dump_snapshot,
    evolve,
    open_env,
    query,
    sample_equilibrium,
)


def test_config_validation():
    EnvConfig(kind=Ssep(), rho=1.0, horizon=8, seed=1, ring_size=64)
    with pytest.raises(ValueError):
        EnvConfig(kind=Pcrw(), rho=1.0, horizon=8, seed=1, ring_size=64)
    with pytest.raises(ValueError):
        EnvConfig(kind=Ssep(), rho=0.0, horizon=8, seed=1)
    with pytest.raises(ValueError):
        EnvConfig(kind=Ssep(), rho=0.5, horizon=8, seed=1, ring_size=63)
    with pytest.raises(ValueError):
        EnvConfig(kind=Ssep(), rho=0.5, horizon=100, seed=1, ring_size=64)
    with pytest.raises(ValueError):
        Ssep(gamma=0.0)
    with pytest.raises(ValueError):
        Pcrw(q=1.0)
    m = default_ring_size(Ssep(gamma=1.0), 100.0)
    assert m % 2 == 0 and m >= 2 * (100 + 6 * 10 + 64)


@pytest.mark.parametrize("kind,rho", [(Ssep(), 0.5), (Ssep(gamma=2.0), 0.3),
                                      (Pcrw(q=0.5), 0.5), (Pcrw(q=0.8), 0.3)])
def test_snapshot_lazy_agree_and_conserve(kind, rho):
    cfg = EnvConfig(kind=kind, rho=rho, horizon=12, seed=42, ring_size=64)
    st0 = sample_equilibrium(cfg)
    lazy = open_env(cfg)
    total = st0.total()
    for t in ([0.0, 1.0, 3.5, 12.0] if isinstance(kind, Ssep) else [0, 2, 7, 12]):
        st = evolve(st0, cfg, t)
        assert st.total() == total
        for x in range(-31, 31):
            assert query(st, x) == lazy.count_at(x, t), (x, t)


def test_ssep_counts_are_binary():
    cfg = EnvConfig(kind=Ssep(), rho=0.7, horizon=8, seed=3, ring_size=64)
    st = evolve(sample_equilibrium(cfg), cfg, 8.0)
    assert set(np.unique(st.occupancy)) <= {0, 1}


def test_evolve_rejects_time_regression():
    cfg = EnvConfig(kind=Ssep(), rho=0.5, horizon=8, seed=3, ring_size=64)
    st = evolve(sample_equilibrium(cfg), cfg, 4.0)
    with pytest.raises(ValueError):
        evolve(st, cfg, 2.0)


def test_query_outside_window_errors():
    cfg = EnvConfig(kind=Ssep(), rho=0.5, horizon=8, seed=3, ring_size=64)
    st = sample_equilibrium(cfg)
    with pytest.raises(WindowError):
        query(st, 4000)
    lazy = open_env(cfg)
    with pytest.raises(WindowError):
        lazy.count_at(4000, 0)


def test_rho_one_degenerate():
    cfg = EnvConfig(kind=Ssep(), rho=1.0, horizon=8, seed=3, ring_size=64)
    st = sample_equilibrium(cfg)
    assert st.occupancy.min() == 1
    assert open_env(cfg).count_at(5, 3.7) == 1
    assert evolve(st, cfg, 8.0).total() == st.total()


def test_equilibrium_occupied_fraction():
    cfg = EnvConfig(kind=Ssep(), rho=0.3, horizon=16, seed=11, ring_size=100_000)
    st = sample_equilibrium(cfg)
    frac = st.occupancy.mean()
    # 99% binomial interval around 0.3
    half = 2.576 * np.sqrt(0.3 * 0.7 / len(st.occupancy))
    assert abs(frac - 0.3) < half + 1e-12


def test_pcrw_mean_counts_match_lambda():
    cfg = EnvConfig(kind=Pcrw(), rho=0.5, horizon=16, seed=11, ring_size=100_000)
    st = sample_equilibrium(cfg)
    lam = cfg.lam
    assert abs(lam - 0.6931471805599453) < 1e-15
    se = np.sqrt(lam / len(st.occupancy))
    assert abs(st.occupancy.mean() - lam) < 3 * se


@pytest.mark.parametrize("kind", [Ssep(), Pcrw(q=0.5)])
def test_coupling_domination_exhaustive_probes(kind):
    lo_cfg = EnvConfig(kind=kind, rho=0.3, horizon=16, seed=7, ring_size=128)
    hi_cfg = EnvConfig(kind=kind, rho=0.6, horizon=16, seed=7, ring_size=128)
    lo, hi = couple(lo_cfg, hi_cfg)
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = int(rng.integers(-60, 60))
        t = float(rng.integers(0, 16)) if isinstance(kind, Pcrw) else float(rng.uniform(0, 16))
        assert lo.count_at(x, t) <= hi.count_at(x, t)


def test_couple_equal_density_identical():
    cfg = EnvConfig(kind=Ssep(), rho=0.5, horizon=8, seed=9, ring_size=64)
    lo, hi = couple(cfg, cfg)
    for x in range(-20, 20):
        assert lo.count_at(x, 5.0) == hi.count_at(x, 5.0)


def test_couple_rejects_mismatch():
    a = EnvConfig(kind=Ssep(), rho=0.3, horizon=8, seed=9, ring_size=64)
    b = EnvConfig(kind=Pcrw(), rho=0.5, horizon=8, seed=9, ring_size=64)
    with pytest.raises(ValueError):
        couple(a, b)
    c = EnvConfig(kind=Ssep(), rho=0.2, horizon=8, seed=10, ring_size=64)
    with pytest.raises(ValueError):
        couple(a, c)
    with pytest.raises(ValueError):
        couple(EnvConfig(kind=Ssep(), rho=0.6, horizon=8, seed=9, ring_size=64), a)


def test_snapshot_dump(tmp_path):
    cfg = EnvConfig(kind=Ssep(), rho=0.5, horizon=8, seed=3, ring_size=64)
    st = sample_equilibrium(cfg)
    csv = tmp_path / "snap.csv"
    js = tmp_path / "snap.json"
    dump_snapshot(st, cfg, csv, js)
    lines = csv.read_text().splitlines()
    assert lines[0] == "site,count"
    assert len(lines) == 65
    import json

    meta = json.loads(js.read_text())
    assert meta["rho"] == 0.5 and meta["M"] == 64 and "gamma" in meta


def test_margin_doubling_changes_nothing_inside_window():
    # enlarging the ring must not reshuffle the shared window's randomness
    small = EnvConfig(kind=Ssep(), rho=0.5, horizon=8, seed=21, ring_size=128)
    big = EnvConfig(kind=Ssep(), rho=0.5, horizon=8, seed=21, ring_size=256)
    a, b = open_env(small), open_env(big)
    for x in range(-20, 21):
        assert a.count_at(x, 6.0) == b.count_at(x, 6.0)
