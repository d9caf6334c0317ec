import numpy as np
import pytest

from dynrwre.environment import EnvConfig, Ssep, open_env
from dynrwre.scales import (
    BoxIndex,
    EventSpec,
    box_bounds,
    d_s,
    displacement_extremes,
    dump_ladder,
    evaluate_event,
    interval_of,
    ladder,
    tile,
)
from dynrwre.walker import WalkParams

P = WalkParams(0.8, 0.2)


def test_ladder_reference_values():
    lad = ladder(10 ** 10, 2)
    assert lad.levels[0] == (10 ** 10, 316)
    assert lad.levels[1][0] == 3_160_000_000_000
    lad = ladder(256, 3)
    assert [l for l, _ in lad.levels] == [256, 1024, 5120]
    assert [e for _, e in lad.levels] == [4, 5, 8]


def test_ladder_guards_and_growth():
    with pytest.raises(ValueError):
        ladder(15, 2)
    with pytest.raises(ValueError):
        ladder(256, 0)
    for l0 in (16, 81, 100, 997, 10 ** 6):
        lad = ladder(l0, 4)
        ells = [e for _, e in lad.levels]
        assert ells == sorted(ells)
        for k in range(3):
            assert lad.scale(k) < lad.scale(k + 1) <= lad.scale(k) ** 1.25 + 1e-9


def test_tiling_exact():
    lad = ladder(256, 2)
    m = BoxIndex(h=2, k=1, anchor=(10.0, 4.0))
    children = tile(m, lad)
    ell = lad.ratio(0)
    assert len(children) == 3 * ell * ell
    (bx, bt) = box_bounds(m, lad)
    anchors = set()
    for c in children:
        assert c.k == 0 and c.h == 2
        iv = interval_of(c, lad)
        assert bx[0] <= iv[0] and iv[1] <= bx[1]
        assert bt[0] <= iv[2] < bt[1]
        anchors.add(c.anchor)
    assert len(anchors) == len(children)
    assert (10.0, 4.0) in anchors
    with pytest.raises(ValueError):
        tile(BoxIndex(h=1, k=0, anchor=(0, 0)), lad)


def test_time_layers_cover_parent_height():
    lad = ladder(256, 2)
    m = BoxIndex(h=1, k=1, anchor=(0.0, 0.0))
    ts = sorted({c.anchor[1] for c in tile(m, lad)})
    hl = lad.scale(0)
    assert ts == [i * hl for i in range(lad.ratio(0))]
    assert ts[-1] + hl == lad.scale(1)


def test_distance():
    a = BoxIndex(h=1, k=0, anchor=(0.0, 5.0))
    b = BoxIndex(h=1, k=0, anchor=(7.0, 9.0))
    assert d_s(a, b) == 7.0 == d_s(b, a)
    assert d_s(a, a) == 0.0
    with pytest.raises(ValueError):
        d_s(a, BoxIndex(h=2, k=0, anchor=(0.0, 0.0)))


def test_event_speed_bound_shortcuts():
    env = open_env(EnvConfig(kind=Ssep(), rho=0.5, horizon=24, seed=3, ring_size=256))
    assert evaluate_event(EventSpec("above", 1.5, 16, (0, 0)), env, P) is False
    assert evaluate_event(EventSpec("above", -1.5, 16, (0, 0)), env, P) is True
    assert evaluate_event(EventSpec("below", 1.5, 16, (0, 0)), env, P) is True
    assert evaluate_event(EventSpec("below", -1.5, 16, (0, 0)), env, P) is False


def test_event_completeness_and_monotonicity():
    env = open_env(EnvConfig(kind=Ssep(), rho=0.5, horizon=24, seed=5, ring_size=256))
    rng = np.random.default_rng(1)
    for _ in range(40):
        v1 = float(rng.uniform(-1.2, 1.0))
        v2 = v1 + float(rng.uniform(0.01, 0.5))
        assert (evaluate_event(EventSpec("above", v1, 16, (0, 0)), env, P)
                or evaluate_event(EventSpec("below", v2, 16, (0, 0)), env, P))
    hits = [evaluate_event(EventSpec("above", v, 16, (0, 0)), env, P)
            for v in (-0.5, 0.0, 0.25, 0.5, 0.75)]
    assert hits == sorted(hits, reverse=True)


def test_refined_grid_only_tightens():
    env0 = EnvConfig(kind=Ssep(), rho=0.5, horizon=24, seed=6, ring_size=256)
    lo0, hi0 = displacement_extremes((0.0, 0.0), 16, open_env(env0), P, refine=0)
    lo1, hi1 = displacement_extremes((0.0, 0.0), 16, open_env(env0), P, refine=2)
    assert lo1 <= lo0 and hi1 >= hi0


def test_ladder_dump(tmp_path):
    lad = ladder(256, 3)
    path = tmp_path / "ladder.csv"
    dump_ladder(lad, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "k,L_k,l_k"
    assert lines[1] == "0,256,4"
    assert len(lines) == 4
