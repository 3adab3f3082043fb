"""Event-driven coalescing walks on a rescaled torus lattice.

Walkers sit on ``n^(-1/alpha) Z`` wrapped to a torus of ``circumference``
sites and jump at rate ``n`` with steps drawn from an ``IncrementLaw``. Each
walker draws from its own counter-based stream keyed by its start point, and
the global queue holds one pending jump per live walker. A walker landing on
an occupied site merges with the occupant; the walker of lower rank survives.
Rank orders by grid level, then birth time, then birth site.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._accel import njit
from .paths import AgedPath, PathCollection
from .rng import DOMAIN_WALK, philox4x64, stream_keys, u01
from .sampling import build_increment_law, draw_step, scale_root

STATUS_OK = 0
STATUS_EVENT_CAP = 1
STATUS_JUMP_CAP = 2


class ResourceError(RuntimeError):
    """A configured capacity was exceeded."""


class ConsistencyError(RuntimeError):
    """The event log contradicts itself."""


# ---------------------------------------------------------------- heap -----
@njit
def _heap_less(ht, hw, i, j):
    return ht[i] < ht[j] or (ht[i] == ht[j] and hw[i] < hw[j])


@njit
def _heap_push(ht, hw, size, t, w):
    i = size
    ht[i] = t
    hw[i] = w
    while i > 0:
        p = (i - 1) >> 1
        if _heap_less(ht, hw, i, p):
            ht[i], ht[p] = ht[p], ht[i]
            hw[i], hw[p] = hw[p], hw[i]
            i = p
        else:
            break
    return size + 1


@njit
def _heap_pop(ht, hw, size):
    size -= 1
    ht[0] = ht[size]
    hw[0] = hw[size]
    i = 0
    while True:
        l = 2 * i + 1
        if l >= size:
            break
        c = l
        if l + 1 < size and _heap_less(ht, hw, l + 1, l):
            c = l + 1
        if _heap_less(ht, hw, c, i):
            ht[i], ht[c] = ht[c], ht[i]
            hw[i], hw[c] = hw[c], hw[i]
            i = c
        else:
            break
    return size


# -------------------------------------------------------------- kernel -----
@njit
def _schedule(w, t, seed, keys, counters, pend, rate, cdf, guide, tail_x0, alpha, tail_total):
    b = philox4x64(counters[w], np.uint64(DOMAIN_WALK), np.uint64(0), np.uint64(0), seed, keys[w])
    counters[w] += np.uint64(1)
    pend[w] = draw_step(b[1], cdf, guide, tail_x0, alpha, tail_total)
    return t - math.log1p(-u01(b[0])) / rate


@njit
def _snapshot(row, counts, pos, alive, orig, circ, half_window):
    half = circ // 2
    for w in range(pos.shape[0]):
        if alive[w]:
            p = pos[w] % circ
            if p >= half:
                p -= circ
            if -half_window <= p <= half_window:
                counts[row, orig[w]] += 1


@njit
def coalesce_kernel(birth_t, birth_site, keys, origin_idx, order, circ, rate, horizon, seed,
                    cdf, guide, tail_x0, alpha, tail_total,
                    sample_times, n_origins, half_window, record, jump_cap, max_events):
    nw = birth_t.shape[0]
    occ = np.full(circ, -1, dtype=np.int64)
    pos = birth_site.copy()
    alive = np.zeros(nw, dtype=np.bool_)
    orig = origin_idx.copy()
    counters = np.zeros(nw, dtype=np.uint64)
    pend = np.zeros(nw, dtype=np.int64)
    ht = np.empty(nw + 1)
    hw = np.empty(nw + 1, dtype=np.int64)
    hsize = 0
    ev_t = np.empty(nw)
    ev_x = np.empty(nw, dtype=np.int64)
    ev_y = np.empty(nw, dtype=np.int64)
    n_ev = 0
    cap = jump_cap if record else 1
    jt = np.empty(cap)
    jw = np.empty(cap, dtype=np.int64)
    jp = np.empty(cap, dtype=np.int64)
    n_j = 0
    n_s = sample_times.shape[0]
    counts = np.zeros((n_s, n_origins), dtype=np.int64)
    si = 0
    bi = 0
    processed = 0
    status = 0
    while True:
        tb = birth_t[order[bi]] if bi < nw else np.inf
        th = ht[0] if hsize > 0 else np.inf
        tn = tb if tb <= th else th
        while si < n_s and sample_times[si] < tn and sample_times[si] <= horizon:
            _snapshot(si, counts, pos, alive, orig, circ, half_window)
            si += 1
        if tn > horizon:
            break
        if tb <= th:
            w = order[bi]
            bi += 1
            s = pos[w] % circ
            o = occ[s]
            if o < 0:
                occ[s] = w
                alive[w] = True
            elif w < o:
                alive[o] = False
                if orig[o] < orig[w]:
                    orig[w] = orig[o]
                occ[s] = w
                alive[w] = True
                ev_t[n_ev] = tb
                ev_x[n_ev] = o
                ev_y[n_ev] = w
                n_ev += 1
            else:
                if orig[w] < orig[o]:
                    orig[o] = orig[w]
                ev_t[n_ev] = tb
                ev_x[n_ev] = w
                ev_y[n_ev] = o
                n_ev += 1
            if alive[w]:
                tj = _schedule(w, tb, seed, keys, counters, pend, rate,
                               cdf, guide, tail_x0, alpha, tail_total)
                hsize = _heap_push(ht, hw, hsize, tj, w)
            continue
        w = hw[0]
        hsize = _heap_pop(ht, hw, hsize)
        if not alive[w]:
            continue
        processed += 1
        if processed > max_events:
            status = 1
            break
        step = pend[w]
        survive = True
        if step != 0:
            occ[pos[w] % circ] = -1
            pos[w] += step
            s = pos[w] % circ
            if record:
                if n_j >= cap:
                    status = 2
                    break
                jt[n_j] = th
                jw[n_j] = w
                jp[n_j] = pos[w]
                n_j += 1
            o = occ[s]
            if o < 0:
                occ[s] = w
            elif o < w:
                alive[w] = False
                survive = False
                if orig[w] < orig[o]:
                    orig[o] = orig[w]
                ev_t[n_ev] = th
                ev_x[n_ev] = w
                ev_y[n_ev] = o
                n_ev += 1
            else:
                alive[o] = False
                if orig[o] < orig[w]:
                    orig[w] = orig[o]
                occ[s] = w
                ev_t[n_ev] = th
                ev_x[n_ev] = o
                ev_y[n_ev] = w
                n_ev += 1
        if survive:
            tj = _schedule(w, th, seed, keys, counters, pend, rate,
                           cdf, guide, tail_x0, alpha, tail_total)
            hsize = _heap_push(ht, hw, hsize, tj, w)
    while si < n_s and sample_times[si] <= horizon:
        _snapshot(si, counts, pos, alive, orig, circ, half_window)
        si += 1
    return (status, processed, ev_t[:n_ev], ev_x[:n_ev], ev_y[:n_ev],
            jt[:n_j], jw[:n_j], jp[:n_j], counts, pos, alive)


# -------------------------------------------------------------- config -----
@dataclass(frozen=True)
class EngineConfig:
    alpha: float = 1.5
    tail_constant: float = 0.25
    scale_n: int = 256
    horizon: float = 1.0
    half_width: float = 32.0  # torus half circumference, rescaled units
    seed: int = 0
    x_max: int = 1000
    max_events: int = 10 ** 9
    jump_cap: int = 2 * 10 ** 7

    @property
    def spacing(self):
        return 1.0 / scale_root(self.scale_n, self.alpha)

    @property
    def circumference(self):
        return 2 * int(round(self.half_width / self.spacing))

    def law(self):
        return build_increment_law(self.alpha, self.tail_constant, self.x_max)


@dataclass
class StartSet:
    """Start points: birth times (rescaled), lattice sites (unwrapped), levels."""

    birth_t: np.ndarray
    site: np.ndarray
    level: np.ndarray

    def __post_init__(self):
        self.birth_t = np.asarray(self.birth_t, dtype=np.float64).ravel()
        self.site = np.asarray(self.site, dtype=np.int64).ravel()
        level = np.asarray(self.level, dtype=np.int64)
        if level.size == self.birth_t.size:
            level = level.ravel()
        self.level = np.broadcast_to(level, self.birth_t.shape).copy()

    def __len__(self):
        return self.birth_t.shape[0]

    def subset(self, mask):
        return StartSet(self.birth_t[mask], self.site[mask], self.level[mask])


def full_occupancy(cfg, t0=0.0, sites=None):
    """Every torus site occupied at time ``t0``; ``sites`` overrides the circumference."""
    m = cfg.circumference if sites is None else int(sites)
    half = m // 2
    site = np.arange(-half, m - half, dtype=np.int64)
    return StartSet(np.full(m, float(t0)), site, 0)


def theta_grid(cfg, theta, space, time, level=0):
    """One start per point of theta Z^2 inside ``space`` x ``time``, snapped to the lattice."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    i = np.arange(math.ceil(space[0] / theta - 1e-12), math.floor(space[1] / theta + 1e-12) + 1)
    j = np.arange(math.ceil(time[0] / theta - 1e-12), math.floor(time[1] / theta + 1e-12) + 1)
    if i.size == 0 or j.size == 0:
        raise ValueError("window contains no grid point")
    tt, xx = np.meshgrid(j * theta, i * theta, indexing="ij")
    site = np.rint(xx / cfg.spacing).astype(np.int64)
    return StartSet(tt, site, level)


def dyadic_grid(cfg, max_level, space, time):
    """Space-time dyadic points (Z/2^l)^2 for l <= max_level, with their grid level."""
    h = 2.0 ** -max_level
    i = np.arange(math.ceil(space[0] / h), math.floor(space[1] / h) + 1, dtype=np.int64)
    j = np.arange(math.ceil(time[0] / h), math.floor(time[1] / h) + 1, dtype=np.int64)
    jj, ii = np.meshgrid(j, i, indexing="ij")
    level = _dyadic_level(ii, jj, max_level)
    site = np.rint((ii * h) / cfg.spacing).astype(np.int64)
    return StartSet(jj * h, site, level)


def lattice_grid(cfg, space, time, thetas=()):
    """Every lattice site at every multiple of the lattice spacing in the window.

    ``thetas`` (decreasing, each a multiple of the next) assign precedence
    levels: a point of the theta_k grid, snapped to the nearest lattice point,
    gets level k unless a coarser grid already claimed it; the rest get
    ``len(thetas)``. Starting only from levels <= k reproduces the theta_k
    system exactly.
    """
    h = cfg.spacing
    thetas = [float(t) for t in thetas]
    for big, small in zip(thetas, thetas[1:]):
        r = big / small
        if not (big > small and abs(r - round(r)) < 1e-9):
            raise ValueError(f"theta {small} does not refine theta {big}")
    i = np.arange(math.ceil(space[0] / h - 1e-9), math.floor(space[1] / h + 1e-9) + 1)
    j = np.arange(math.ceil(time[0] / h - 1e-9), math.floor(time[1] / h + 1e-9) + 1)
    jj, ii = np.meshgrid(j, i, indexing="ij")
    level = np.full(ii.shape, len(thetas), dtype=np.int64)
    for k in range(len(thetas) - 1, -1, -1):
        th = thetas[k]
        gi = np.arange(math.ceil(space[0] / th - 1e-9), math.floor(space[1] / th + 1e-9) + 1)
        gj = np.arange(math.ceil(time[0] / th - 1e-9), math.floor(time[1] / th + 1e-9) + 1)
        si = np.rint(gi * th / h).astype(np.int64) - i[0]
        sj = np.rint(gj * th / h).astype(np.int64) - j[0]
        si = si[(si >= 0) & (si < i.size)]
        sj = sj[(sj >= 0) & (sj < j.size)]
        level[np.ix_(sj, si)] = k
    return StartSet(jj * h, ii, level)


def _dyadic_level(ii, jj, max_level):
    level = np.full(ii.shape, max_level, dtype=np.int64)
    for lev in range(max_level - 1, -1, -1):
        step = 2 ** (max_level - lev)
        level = np.where((ii % step == 0) & (jj % step == 0), lev, level)
    return level


# -------------------------------------------------------------- system -----
@dataclass
class WalkSystem:
    config: EngineConfig
    birth_t: np.ndarray  # indexed by rank
    site: np.ndarray
    level: np.ndarray
    events: np.ndarray  # structured: t, absorbed, survivor
    jump_t: np.ndarray
    jump_walker: np.ndarray
    jump_site: np.ndarray
    final_site: np.ndarray
    alive: np.ndarray
    counts: np.ndarray = None
    sample_times: np.ndarray = None
    origin_levels: np.ndarray = None
    processed: int = 0
    recorded: bool = True
    window_sites: int = None
    wrapped: int = 0  # walkers whose unwrapped position left the fundamental domain
    ident: np.ndarray = field(default=None, repr=False)

    @property
    def n_walkers(self):
        return self.birth_t.shape[0]

    @property
    def spacing(self):
        return self.config.spacing

    def live_count(self, t):
        born = np.count_nonzero(self.birth_t <= t)
        return born - np.count_nonzero(self.events["t"] <= t)

    def positions_at(self, t):
        """Unwrapped lattice sites of the walkers alive at time ``t`` (by rank)."""
        if not self.recorded:
            raise ValueError("trajectories were not recorded")
        alive = self.birth_t <= t
        dead = self.events["absorbed"][self.events["t"] <= t]
        alive[dead] = False
        pos = self.site.copy()
        m = self.jump_t <= t
        # last jump wins: jump log is time ordered
        pos[self.jump_walker[m]] = self.jump_site[m]
        ids = np.flatnonzero(alive)
        return ids, pos[ids]

    def occupied_sites(self, t):
        _, p = self.positions_at(t)
        return np.unique(p % self.config.circumference)


def _rank_order(starts):
    order = np.lexsort((starts.site, starts.birth_t, starts.level))
    return order


def simulate(cfg, starts, sample_times=(), half_window=None, record=True, law=None,
             origin_levels=None):
    """Run the coalescing system from ``starts`` up to ``cfg.horizon``."""
    if len(starts) == 0:
        raise ValueError("starting set is empty")
    if not cfg.horizon > float(starts.birth_t.max()):
        raise ValueError("horizon must exceed every birth time")
    law = cfg.law() if law is None else law
    rank = _rank_order(starts)
    bt = starts.birth_t[rank]
    site = starts.site[rank]
    level = starts.level[rank]
    keys = stream_keys(bt.view(np.int64), site)
    if origin_levels is None:
        origin_levels = np.unique(bt)
    origin_idx = np.searchsorted(origin_levels, bt).astype(np.int64)
    order = np.argsort(bt, kind="stable").astype(np.int64)
    circ = cfg.circumference
    hw = circ if half_window is None else int(half_window)
    st = np.asarray(sample_times, dtype=np.float64)
    (status, processed, et, ex, ey, jt, jw, jp, counts, pos, alive) = coalesce_kernel(
        bt, site, keys, origin_idx, order, circ, float(cfg.scale_n), float(cfg.horizon),
        np.uint64(cfg.seed), *law.tables(), st, origin_levels.shape[0], hw,
        bool(record), int(cfg.jump_cap), int(cfg.max_events))
    if status == STATUS_EVENT_CAP:
        raise ResourceError(f"event cap max_events={cfg.max_events} exceeded")
    if status == STATUS_JUMP_CAP:
        raise ResourceError(f"trajectory buffer jump_cap={cfg.jump_cap} exceeded")
    events = np.zeros(et.shape[0], dtype=[("t", "f8"), ("absorbed", "i8"), ("survivor", "i8")])
    events["t"], events["absorbed"], events["survivor"] = et, ex, ey
    half = circ // 2
    out = (pos < -half) | (pos >= circ - half)
    if record and jw.size:
        far = (jp < -half) | (jp >= circ - half)
        out[jw[far]] = True
    return WalkSystem(cfg, bt, site, level, events, jt, jw, jp, pos, alive, counts, st,
                      origin_levels, processed, bool(record), min(hw, half),
                      int(np.count_nonzero(out)), rank)


# -------------------------------------------------------------- ages -------
def compute_ages(system, replica=0, min_age=None, tol=1e-12):
    """Aged-path record for every walker, absorbed ones following their survivor.

    Positions are torus sites in ``[-circ/2, circ/2)`` times the spacing, so a
    walker crossing the far side of the torus shows a jump there, and merged
    walkers carry identical values from the merge on. With ``min_age`` only walkers whose own age reaches ``min_age`` without a
    coalescence jump get a record; the others are suppressed by any age filter
    at that level or above, so skipping them saves building their tails.
    """
    if not system.recorded:
        raise ValueError("ages need recorded trajectories")
    nw = system.n_walkers
    ev = system.events
    birth = system.birth_t
    absorbed_at = np.full(nw, np.inf)
    survivor = np.full(nw, -1, dtype=np.int64)
    cur = birth.copy()
    origin0 = birth.copy()
    born_into = np.zeros(nw, dtype=bool)
    o_jumps = [[] for _ in range(nw)]
    for t, x, y in zip(ev["t"], ev["absorbed"], ev["survivor"]):
        if absorbed_at[x] != np.inf or absorbed_at[y] <= t or birth[y] > t:
            raise ConsistencyError(f"event ({t}, {x}, {y}) involves a dead or unborn walker")
        absorbed_at[x] = t
        survivor[x] = y
        m = min(cur[x], cur[y])
        for v in (x, y):
            if m < cur[v]:
                if t == birth[v]:
                    origin0[v] = m
                    born_into[v] = True
                elif o_jumps[v] and o_jumps[v][-1][0] == t:
                    o_jumps[v][-1] = (t, m)
                else:
                    o_jumps[v].append((t, m))
        cur[y] = m
    if np.any(system.jump_t > absorbed_at[system.jump_walker]):
        raise ConsistencyError("absorbed walker has later jumps")

    horizon = system.config.horizon
    if min_age is None:
        chosen = np.arange(nw)
    else:
        first = np.array([o[0][0] if o else horizon for o in o_jumps])
        chosen = np.flatnonzero(~born_into & (first - birth >= min_age - tol)
                                & (horizon - birth >= min_age - tol))

    order = np.argsort(system.jump_walker, kind="stable")
    bounds = np.searchsorted(system.jump_walker[order], np.arange(nw + 1))
    jt_sorted = system.jump_t[order]
    js_sorted = system.jump_site[order]
    ot_own = [np.array([a for a, _ in o], dtype=np.float64) for o in o_jumps]
    o_own = [np.array([b for _, b in o], dtype=np.float64) for o in o_jumps]
    spacing = system.spacing
    circ = system.config.circumference
    half = circ // 2

    paths = []
    for w in chosen:
        ts, ss, ots, os_ = [], [], [], []
        v, since = w, -np.inf
        while True:
            lo, hi = bounds[v], bounds[v + 1]
            t_v, s_v = jt_sorted[lo:hi], js_sorted[lo:hi]
            k = np.searchsorted(t_v, since, side="right")
            ts.append(t_v[k:])
            ss.append(s_v[k:])
            ko = np.searchsorted(ot_own[v], since, side="right")
            ots.append(ot_own[v][ko:])
            os_.append(o_own[v][ko:])
            y = survivor[v]
            if y < 0:
                break
            v, since = y, absorbed_at[v]
        # torus coordinates in [-half, circ - half): merged walkers share values
        x0 = (system.site[w] + half) % circ - half
        sites = (np.concatenate(ss) + half) % circ - half
        moved = sites != np.concatenate([[x0], sites[:-1]])
        paths.append(AgedPath(
            birth[w], x0 * spacing, np.concatenate(ts)[moved], sites[moved] * spacing,
            origin0[w], np.concatenate(ots), np.concatenate(os_), horizon, bool(born_into[w]),
            {"walker": int(w), "replica": int(replica), "level": int(system.level[w]),
             "rank": int(w)}))
    return PathCollection(tuple(paths), {"scale_n": system.config.scale_n,
                                         "alpha": system.config.alpha,
                                         "seed": system.config.seed})


# ------------------------------------------------------------ front-ends ---
def run_coalescing(cfg, starts, replica=0, **kw):
    """Simulate and attach age-annotated paths: returns ``(system, collection)``."""
    system = simulate(cfg, starts, **kw)
    return system, compute_ages(system, replica)


def run_dyadic_hierarchy(levels, cfg, space, time, replica=0):
    """Nested systems started from dyadic points of level <= each entry of ``levels``.

    Streams are keyed by start point and lower levels have precedence, so each
    coarser system is embedded in every finer one.
    """
    levels = list(levels)
    if levels != sorted(levels):
        raise ValueError("levels must be sorted increasing")
    grid = dyadic_grid(cfg, levels[-1], space, time)
    out = []
    for lev in levels:
        starts = grid.subset(grid.level <= lev)
        out.append(run_coalescing(cfg, starts, replica))
    return out


def run_theta_grid(theta, space, time, cfg, replica=0):
    starts = theta_grid(cfg, theta, space, time)
    return run_coalescing(cfg, starts, replica)
