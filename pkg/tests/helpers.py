"""Shared strategies and small simulated systems."""

import itertools
import math

import numpy as np
from hypothesis import strategies as st

from stableweb.engine import EngineConfig, compute_ages, dyadic_grid, simulate
from stableweb.paths import AgedPath

TINY = dict(scale_n=16, half_width=4.0, tail_constant=0.2)


@st.composite
def aged_paths(draw, max_jumps=6, max_age_jumps=3, span=(-2.0, 2.0)):
    """Random aged paths on a coarse grid of times and values."""
    grid = lambda k: np.round(np.asarray(k, dtype=float) / 16, 6)
    birth = float(grid(draw(st.integers(int(span[0] * 16), int(span[1] * 16) - 2))))
    end = draw(st.one_of(st.just(math.inf),
                         st.integers(1, 48).map(lambda k: birth + k / 16)))
    limit = end if math.isfinite(end) else birth + 3.0
    candidate = np.unique(np.round(np.array(
        draw(st.lists(st.floats(1e-3, 1.0), max_size=max_jumps))) * (limit - birth), 4))
    jt = birth + candidate[candidate > 0]
    jt = jt[jt <= limit]
    jv = grid(draw(st.lists(st.integers(-60, 60), min_size=jt.size, max_size=jt.size)))
    x0 = float(grid(draw(st.integers(-60, 60))))
    k = draw(st.integers(0, max_age_jumps))
    ot = np.unique(np.round(birth + (limit - birth) * np.array(
        draw(st.lists(st.floats(1e-3, 1.0), min_size=k, max_size=k))), 4))
    ot = ot[(ot > birth) & (ot <= limit)]
    init = float(grid(draw(st.integers(0, 16))))
    origin0 = birth - init
    drops = grid(draw(st.lists(st.integers(1, 24), min_size=ot.size, max_size=ot.size)))
    origins = origin0 - np.cumsum(drops)
    born_into = bool(init > 0 and draw(st.booleans()))
    p = AgedPath(birth, x0, jt, jv, origin0, ot, origins, end, born_into)
    p.check()
    return p


def small_system(seed, levels=2, horizon=1.0, space=(-1.5, 1.5), time=(-0.5, 0.5), n=16):
    cfg = EngineConfig(seed=seed, horizon=horizon, **{**TINY, "scale_n": n})
    sys = simulate(cfg, dyadic_grid(cfg, levels, space, time))
    return sys, compute_ages(sys)


def random_path(rng):
    """Unit-domain aged path with a few Gaussian jumps and age jumps."""
    k = int(rng.integers(0, 4))
    jt = np.sort(rng.uniform(0.05, 0.95, k))
    jv = rng.normal(0, 0.4, k)
    ot = np.sort(rng.uniform(0.05, 0.95, int(rng.integers(0, 2))))
    origins = -np.cumsum(rng.uniform(0.05, 0.4, ot.size))
    return AgedPath(0.0, float(rng.normal(0, 0.2)), jt, jv, 0.0, ot, origins, 1.0)


def exhaustive_modulus(jt, vals, e, f, delta, m):
    """Every partition of [e, f] with cuts on the delta/m lattice and cells >= delta."""
    step = delta / m
    grid = [e + i * step for i in range(1, int(round((f - e) / step)))]

    def osc(a, b):
        k = np.searchsorted(jt, a, side="right")
        v = [vals[k]] + [vals[i + 1] for i in range(len(jt)) if a < jt[i] < b]
        return max(v) - min(v)

    best = math.inf
    for r in range(len(grid) + 1):
        for cuts in itertools.combinations(grid, r):
            pts = (e, *cuts, f)
            if any(b - a < delta - 1e-12 for a, b in zip(pts, pts[1:])):
                continue
            best = min(best, max(osc(a, b) for a, b in zip(pts, pts[1:])))
    return best


def modulus_case(rng, m=4):
    """Up to 6 jumps on the 1/m lattice of [0, L], integer values."""
    length = int(rng.integers(1, 5))
    nj = int(rng.integers(0, 7))
    jt = np.sort(rng.choice(np.arange(1, length * m), size=min(nj, length * m - 1),
                            replace=False)) / m
    vals = np.concatenate([[0], rng.integers(-3, 4, size=jt.size)]).astype(float)
    return jt, vals, float(length)
