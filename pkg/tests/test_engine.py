import heapq
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stableweb.engine import (EngineConfig, ResourceError, StartSet, compute_ages,
                              dyadic_grid, full_occupancy, lattice_grid, simulate, theta_grid)
from stableweb.operators import filter_age
from stableweb.rng import DOMAIN_WALK, philox_blocks, stream_keys, to_unit
from stableweb.sampling import steps_from_words

SMALL = EngineConfig(scale_n=16, horizon=0.6, half_width=4.0, seed=3, tail_constant=0.2)


def reference_run(cfg, starts):
    """Naive replay: each walker's clock and steps are fixed by its own stream."""
    law = cfg.law()
    rank = np.lexsort((starts.site, starts.birth_t, starts.level))
    bt, site = starts.birth_t[rank], starts.site[rank]
    keys = stream_keys(bt.view(np.int64), site)
    circ = cfg.circumference

    def draws(w, k):
        b = philox_blocks([k], DOMAIN_WALK, cfg.seed, int(keys[w]))[0]
        dt = -math.log1p(-float(to_unit(b[:1])[0])) / cfg.scale_n
        return dt, int(steps_from_words(law, b[1:2])[0])

    pos = {w: int(site[w]) for w in range(len(bt))}
    occ, counter, pending, events, jumps = {}, {}, {}, [], []
    queue = [(bt[w], 0, w) for w in range(len(bt))]  # births first at equal times
    heapq.heapify(queue)

    def schedule(w, t):
        dt, step = draws(w, counter.get(w, 0))
        counter[w] = counter.get(w, 0) + 1
        pending[w] = step
        heapq.heappush(queue, (t + dt, 1, w))

    alive = set()
    while queue:
        t, kind, w = heapq.heappop(queue)
        if t > cfg.horizon:
            break
        if kind == 0:
            o = occ.get(pos[w] % circ)
            if o is None or w < o:
                if o is not None:
                    alive.discard(o)
                    events.append((t, o, w))
                occ[pos[w] % circ] = w
                alive.add(w)
                schedule(w, t)
            else:
                events.append((t, w, o))
            continue
        if w not in alive:
            continue
        if pending[w]:
            del occ[pos[w] % circ]
            pos[w] += pending[w]
            jumps.append((t, w, pos[w]))
            o = occ.get(pos[w] % circ)
            if o is not None and o < w:
                alive.discard(w)
                events.append((t, w, o))
                continue
            if o is not None:
                alive.discard(o)
                events.append((t, o, w))
            occ[pos[w] % circ] = w
        schedule(w, t)
    return events, jumps


def _as_lists(sys):
    ev = [(float(t), int(x), int(y)) for t, x, y in sys.events]
    jumps = [(float(t), int(w), int(p)) for t, w, p in
             zip(sys.jump_t, sys.jump_walker, sys.jump_site)]
    return ev, jumps


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_kernel_matches_naive_replay(seed):
    cfg = EngineConfig(scale_n=16, horizon=0.6, half_width=3.0, seed=seed, tail_constant=0.2)
    starts = lattice_grid(cfg, (-1.0, 1.0), (0.0, 0.3), thetas=(0.5, 0.25))
    ev, jumps = reference_run(cfg, starts)
    got_ev, got_jumps = _as_lists(simulate(cfg, starts))
    assert got_ev == pytest.approx(ev, abs=0, rel=1e-15)
    assert got_jumps == pytest.approx(jumps, abs=0, rel=1e-15)
    assert len(ev) > 10


def test_same_seed_same_system():
    starts = full_occupancy(SMALL)
    a, b = simulate(SMALL, starts), simulate(SMALL, starts)
    assert np.array_equal(a.events, b.events)
    assert np.array_equal(a.jump_t, b.jump_t) and np.array_equal(a.jump_site, b.jump_site)
    c = simulate(EngineConfig(**{**SMALL.__dict__, "seed": 4}), starts)
    assert not np.array_equal(a.jump_t[:20], c.jump_t[:20])


def test_start_order_is_irrelevant():
    starts = dyadic_grid(SMALL, 2, (-1.0, 1.0), (0.0, 0.5))
    perm = np.random.default_rng(0).permutation(len(starts))
    a, b = simulate(SMALL, starts), simulate(SMALL, starts.subset(perm))
    assert np.array_equal(a.events, b.events)


def test_exclusion_and_conservation():
    sys = simulate(SMALL, full_occupancy(SMALL))
    for t in np.linspace(0.01, SMALL.horizon, 7):
        ids, p = sys.positions_at(t)
        assert np.unique(p % SMALL.circumference).size == ids.size
        assert ids.size == sys.live_count(t)
    assert sys.n_walkers - len(sys.events) == np.count_nonzero(sys.alive)
    # survivors always have lower rank
    assert np.all(sys.events["survivor"] < sys.events["absorbed"])


def test_aged_paths_satisfy_invariants():
    cfg = EngineConfig(scale_n=16, horizon=1.0, half_width=4.0, seed=7, tail_constant=0.2)
    sys = simulate(cfg, dyadic_grid(cfg, 2, (-1.5, 1.5), (0.0, 0.75)))
    col = compute_ages(sys)
    assert len(col) == sys.n_walkers
    for p in col:
        p.check(tol=1e-12)
        assert p.end == cfg.horizon
        for t in np.linspace(p.birth, p.end, 5):
            assert 0 <= p.age_at(t) <= t - sys.birth_t.min() + 1e-12


def test_coalesced_paths_share_their_future():
    sys = simulate(SMALL, full_occupancy(SMALL))
    col = {p.meta["walker"]: p for p in compute_ages(sys)}
    for t, x, y in sys.events[:50]:
        px, py = col[int(x)], col[int(y)]
        for s in np.linspace(t, SMALL.horizon, 4):
            assert px.value_at(s) == py.value_at(s)
            assert px.origin_at(s) == py.origin_at(s)


def test_min_age_skips_only_suppressed_walkers():
    cfg = EngineConfig(scale_n=16, horizon=1.0, half_width=4.0, seed=1, tail_constant=0.2)
    sys = simulate(cfg, dyadic_grid(cfg, 3, (-1.0, 1.0), (0.0, 0.75)))
    for delta in (0.125, 0.25):
        full = filter_age(compute_ages(sys), delta)
        lean = filter_age(compute_ages(sys, min_age=delta), delta)
        assert full == lean


def test_event_cap_raises():
    cfg = EngineConfig(**{**SMALL.__dict__, "max_events": 10})
    with pytest.raises(ResourceError):
        simulate(cfg, full_occupancy(cfg))


def test_jump_cap_raises():
    cfg = EngineConfig(**{**SMALL.__dict__, "jump_cap": 5})
    with pytest.raises(ResourceError):
        simulate(cfg, full_occupancy(cfg))


def test_horizon_must_follow_births():
    with pytest.raises(ValueError):
        simulate(SMALL, theta_grid(SMALL, 0.5, (-1, 1), (0, 1)))


@given(st.sampled_from([(0.5,), (0.5, 0.25), (1.0, 0.25, 0.125)]), st.integers(0, 5))
def test_lattice_levels_reproduce_theta_systems(thetas, seed):
    cfg = EngineConfig(scale_n=64, horizon=0.75, half_width=4.0, seed=seed, tail_constant=0.2)
    space, time = (-1.0, 1.0), (0.0, 0.5)
    grid = lattice_grid(cfg, space, time, thetas)
    for k, th in enumerate(thetas):
        direct = theta_grid(cfg, th, space, time)
        sub = grid.subset(grid.level <= k)
        assert sorted(zip(sub.birth_t, sub.site)) == sorted(zip(direct.birth_t, direct.site))
    with pytest.raises(ValueError):
        lattice_grid(cfg, space, time, (0.5, 0.3))


def test_coarse_system_embeds_in_fine():
    cfg = EngineConfig(scale_n=64, horizon=1.0, half_width=4.0, seed=2, tail_constant=0.2)
    grid = dyadic_grid(cfg, 2, (-1.0, 1.0), (0.0, 0.5))
    coarse = compute_ages(simulate(cfg, grid.subset(grid.level == 0)))
    fine = compute_ages(simulate(cfg, grid))
    fine_traj = {(p.birth, p.x0, p.jump_times.tobytes(), p.jump_values.tobytes()) for p in fine}
    for p in coarse:
        assert (p.birth, p.x0, p.jump_times.tobytes(), p.jump_values.tobytes()) in fine_traj


def test_sample_counts_match_positions():
    snap = np.array([0.2, 0.55])
    sys = simulate(SMALL, full_occupancy(SMALL), sample_times=snap)
    for row, t in enumerate(snap):
        assert sys.counts[row].sum() == sys.live_count(t)


def test_startset_broadcasts_level():
    s = StartSet(np.zeros((2, 3)), np.arange(6).reshape(2, 3), np.arange(6).reshape(2, 3))
    assert s.level.tolist() == list(range(6))
    assert StartSet([0.0, 1.0], [0, 1], 2).level.tolist() == [2, 2]
