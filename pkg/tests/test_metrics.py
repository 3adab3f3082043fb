import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import aged_paths, exhaustive_modulus, modulus_case, random_path
from stableweb.metrics import MetricOptions, hausdorff, metric_d, metric_d1, metric_rho, modulus
from stableweb.paths import AgedPath, PathCollection

finite_paths = aged_paths(max_jumps=4, max_age_jumps=2).filter(lambda p: math.isfinite(p.end))


def P(jt, jv, x0=0.0, b=0.0, e=1.0):
    return AgedPath(b, x0, jt, jv, end=e)


@pytest.mark.parametrize("case", range(40))
def test_modulus_equals_exhaustive_search(case):
    jt, vals, length = modulus_case(np.random.default_rng(case))
    got = modulus((jt, vals), 1.0, (0.0, length))
    assert got == exhaustive_modulus(jt, vals, 0.0, length, 1.0, 4)


def test_modulus_known_values():
    assert modulus(P([0.5], [1.0]), 0.25) == 0.0
    assert modulus(P([0.4, 0.5], [1.0, 2.0]), 0.25) == 1.0
    assert modulus(P([0.4, 0.5], [1.0, 2.0]), 1.0) == 2.0
    with pytest.raises(ValueError):
        modulus(P([], []), 2.0)


@given(finite_paths)
def test_distance_to_itself_is_zero(p):
    assert metric_d(p, p) == 0.0
    assert metric_d(p, p, aged=False) == 0.0
    assert metric_rho(p, p) == 0.0


@given(finite_paths, finite_paths)
def test_symmetry(p, q):
    assert metric_d(p, q) == metric_d(q, p)
    assert metric_rho(p, q) == metric_rho(q, p)


def test_empty_path_conventions():
    p = P([0.5], [1.0])
    assert metric_d(None, None) == 0.0
    assert metric_d(p, None) == metric_d(None, p) == 1.0
    assert metric_d1(p, None) == 1.0
    empty = PathCollection(())
    assert hausdorff(empty, empty) == 0.0
    assert hausdorff(empty, PathCollection((p,))) == 1.0


def test_known_distances():
    # aligning the jump costs 0.05 of time shift; the slope term is set by the
    # steeper direction, 0.5 / 0.45 on the way back
    a, b = P([0.5], [1.0]), P([0.55], [1.0])
    assert metric_d(a, b, aged=False) == pytest.approx(0.05 + 0.5 / 0.45 - 1, abs=1e-12)
    # a constant spatial offset is paid at face value
    g = P([0.3, 0.6], [1.0, 0.5])
    assert metric_d(g, P([0.3, 0.6], [1.3, 0.8], 0.3), aged=False) == pytest.approx(0.3)
    # offsets saturate at 1, then the birth gap adds on top
    far = P([0.3, 0.6], [11.0, 10.5], 10.0)
    assert metric_d(g, far, aged=False) == pytest.approx(1.0)
    shifted = AgedPath(0.25, 0.0, [0.55, 0.85], [1.0, 0.5], end=1.25)
    assert metric_d(g, shifted, aged=False) == pytest.approx(0.25 + 0.25, abs=1e-12)


@pytest.mark.parametrize("pair", range(10))
def test_refining_the_grid_never_increases_the_distance(pair):
    rng = np.random.default_rng(100 + pair)
    p, q = (random_path(rng) for _ in range(2))
    last = math.inf
    for h in (0.5, 0.25, 0.125, 0.0625, 0.03125):
        v = metric_d(p, q, MetricOptions(h=h))
        assert v <= last
        last = v


@pytest.mark.parametrize("triple", range(20))
def test_triangle_inequality(triple):
    rng = np.random.default_rng(500 + triple)
    a, b, c = (random_path(rng) for _ in range(3))
    opts = MetricOptions()
    ab, bc, ac = metric_d(a, b, opts), metric_d(b, c, opts), metric_d(a, c, opts)
    assert ac <= ab + bc + 1e-9


def brute_hausdorff(c1, c2, opts):
    d = np.array([[metric_rho(p, q, opts) for q in c2] for p in c1])
    return max(d.min(axis=1).max(), d.min(axis=0).max())


@pytest.mark.parametrize("seed", range(3))
def test_hausdorff_matches_brute_force(seed):
    rng = np.random.default_rng(seed)

    def col(k):
        return PathCollection(tuple(
            AgedPath(float(b), float(x), [float(b) + 0.3], [float(x) + float(j)], float(b) - 0.5,
                     end=3.0)
            for b, x, j in zip(rng.uniform(-1, 1, k), rng.uniform(-1, 1, k),
                               rng.normal(0, 0.5, k))))

    opts = MetricOptions(h=0.125)
    a, b = col(4), col(5)
    assert hausdorff(a, b, opts) == brute_hausdorff(a, b, opts)
    assert hausdorff(a, a, opts) == 0.0


def test_rho_bound_and_projection_discontinuity():
    # ages 0.5 - eps and 0.5 + eps at the coalescence jump: the paths are close
    # but the level-1 projection keeps one and suppresses the other
    def aged(jump_age):
        return AgedPath(0.0, 0.0, [], [], 0.0, [0.25], [0.25 - jump_age], 2.0)

    lo, hi = aged(0.5 - 1e-6), aged(0.5 + 1e-6)
    assert metric_d(lo, hi) < 1e-5
    v, tail = metric_rho(lo, hi, with_bound=True)
    assert tail == 2.0 ** -3
    assert v >= 0.5


def test_compact_metric_discounts_late_differences():
    a = AgedPath(0.0, 0.0, [30.0], [5.0], end=math.inf)
    b = AgedPath(0.0, 0.0, [], [], end=math.inf)
    assert metric_d1(a, b) < 1e-9
    assert metric_d1(a, a) == 0.0
