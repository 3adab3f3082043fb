"""Distances between cadlag paths, aged paths, and finite path collections.

A path component is handled as a piecewise-linear cadlag function
``f(t) = base[k] + drift * t`` on the k-th piece between jump times; drift
is 0 for trajectories and 1 for ages. The time-change infimum is searched over
piecewise-linear bijections whose breakpoints come from matched grids: the
first grid holds both paths' jump times (the second path's pulled back through
the affine map) plus uniform points; the second grid is its affine image with
the second path's jump times snapped in exactly. Every reported value is the
objective of one concrete bijection, hence an upper bound of the infimum.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._accel import njit
from .operators import project

D1_HORIZON = math.log(1e12)


@dataclass(frozen=True)
class MetricOptions:
    h: float = 1.0 / 16  # finest uniform grid spacing
    h_max: float = 0.5  # coarsest level of the resolution ladder
    window: int = 3  # max grid steps per bijection segment, per axis
    n_max: int = 3  # terms kept in the rho series
    thresholds: tuple = (0.0, 1 / 64, 1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0, math.inf)

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        if self.window < 1:
            raise ValueError("window must be at least 1")

    def ladder(self):
        hs = [self.h]
        while hs[-1] * 2 <= self.h_max:
            hs.append(hs[-1] * 2)
        return hs


# ------------------------------------------------------------ modulus -----
def modulus(path, delta, window=None):
    """Modulus of continuity: best partition of [e, f] into cells of length >= delta.

    ``path`` is an ``AgedPath`` (its trajectory is used) or a pair
    ``(jump_times, values)`` with ``values[0]`` the initial value.
    """
    if hasattr(path, "jump_times"):
        jt, vals = path.jump_times, np.concatenate([[path.x0], path.jump_values])
        lo, hi = path.birth, path.end
    else:
        jt, vals = np.asarray(path[0], float), np.asarray(path[1], float)
        lo, hi = -math.inf, math.inf
    e, f = (lo, hi) if window is None else window
    if not (lo <= e < f <= hi) or not math.isfinite(f - e):
        raise ValueError(f"window [{e}, {f}] outside the path domain [{lo}, {hi}]")
    if not 0 < delta <= f - e:
        raise ValueError(f"delta must lie in (0, {f - e}], got {delta}")
    inner = jt[(jt > e) & (jt < f)]
    return float(_modulus_dp(_cut_candidates(inner, e, f, float(delta)), jt, vals, float(delta)))


@njit
def _cut_candidates(inner, e, f, delta):
    # Some optimal partition has every cut either at a jump or exactly delta
    # before the next cut, with a jump strictly inside that cell (otherwise
    # the cut can be dropped). Chains of such cuts hang off jumps and f.
    out = [e, f]
    for a in inner:
        out.append(a)
    na = inner.shape[0]
    for q in range(na + 1):
        prev = inner[q] if q < na else f
        k = q  # jumps in (c, prev) have index < k
        while True:
            c = prev - delta
            while prev - c < delta:
                c = np.nextafter(c, -np.inf)
            if c <= e:
                break
            while k > 0 and inner[k - 1] >= prev:
                k -= 1
            if k == 0 or inner[k - 1] <= c:
                break
            out.append(c)
            prev = c
    return np.unique(np.array(out))


@njit
def _step_piece(jt, t, strict):
    # number of jump times <= t (< t when strict)
    lo, hi = 0, jt.shape[0]
    while lo < hi:
        mid = (lo + hi) >> 1
        if jt[mid] < t or (not strict and jt[mid] == t):
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit
def _sparse_tables(vals):
    n = vals.shape[0]
    levels = 1
    while (1 << levels) <= n:
        levels += 1
    lo = np.empty((levels, n))
    hi = np.empty((levels, n))
    lo[0] = vals
    hi[0] = vals
    for L in range(1, levels):
        w = 1 << (L - 1)
        for i in range(n):
            j = min(i + w, n - 1)
            lo[L, i] = min(lo[L - 1, i], lo[L - 1, j])
            hi[L, i] = max(hi[L - 1, i], hi[L - 1, j])
    return lo, hi


@njit
def _range_osc(lo, hi, a, b):
    # max - min of vals[a..b]
    L = 0
    while (1 << (L + 1)) <= b - a + 1:
        L += 1
    j = b - (1 << L) + 1
    return max(hi[L, a], hi[L, j]) - min(lo[L, a], lo[L, j])


@njit
def _modulus_dp(cand, jt, vals, delta):
    # best[j]: optimal max oscillation over partitions of [cand[0], cand[j]).
    # The cell [cand[i], cand[j]) sees vals[first..last] with first the jump
    # count at cand[i] and last the count of jumps strictly before cand[j];
    # its oscillation grows as i decreases, which bounds the scan.
    m = cand.shape[0]
    lo, hi = _sparse_tables(vals)
    first = np.empty(m, dtype=np.int64)
    for i in range(m):
        first[i] = _step_piece(jt, cand[i], False)
    best = np.full(m, np.inf)
    best[0] = 0.0
    imax = -1
    for j in range(1, m):
        while imax + 1 < j and cand[j] - cand[imax + 1] >= delta:
            imax += 1
        last = _step_piece(jt, cand[j], True)
        bj = np.inf
        for i in range(imax, -1, -1):
            osc = _range_osc(lo, hi, first[i], last)
            if osc >= bj:
                break
            c = max(best[i], osc)
            if c < bj:
                bj = c
        best[j] = bj
    return best[m - 1]


# ------------------------------------------------------- segment cost -----
@njit
def _piece(jt, t, left):
    lo, hi = 0, jt.shape[0]
    while lo < hi:
        mid = (lo + hi) >> 1
        if jt[mid] < t or (not left and jt[mid] == t):
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit
def _capped(val):
    return val if val < 1.0 else 1.0


@njit
def _weighted_sup(a0, a1, b0, b1, lo, hi):
    # sup of exp(-|t|) * min(|(a0 + a1 t, b0 + b1 t)|, 1) over [lo, hi]
    qa = a1 * a1 + b1 * b1
    qb = 2.0 * (a0 * a1 + b0 * b1)
    qc = a0 * a0 + b0 * b0
    best = 0.0
    cands = np.empty(9)
    n = 0
    cands[0] = lo
    cands[1] = hi
    n = 2
    if lo < 0.0 < hi:
        cands[n] = 0.0
        n += 1
    for which in range(3):
        if which == 0:
            A, B, C = qa, qb, qc - 1.0
        elif which == 1:
            A, B, C = 2.0 * qa, 2.0 * qb - 2.0 * qa, 2.0 * qc - qb
        else:
            A, B, C = 2.0 * qa, 2.0 * qb + 2.0 * qa, 2.0 * qc + qb
        if A == 0.0:
            if B != 0.0:
                cands[n] = -C / B
                n += 1
        else:
            disc = B * B - 4.0 * A * C
            if disc >= 0.0:
                r = math.sqrt(disc)
                cands[n] = (-B - r) / (2.0 * A)
                cands[n + 1] = (-B + r) / (2.0 * A)
                n += 2
    for m in range(n):
        t = cands[m]
        if t < lo or t > hi:
            continue
        v = math.exp(-abs(t)) * _capped(math.hypot(a0 + a1 * t, b0 + b1 * t))
        if v > best:
            best = v
    return best


@njit
def segment_cost(j1, b1, dr1, j2, b2, dr2, s0, s1, u0, u1, last, weighted):
    """Sup of the capped space-time gap along the linear map [s0, s1] -> [u0, u1]."""
    sig = (u1 - u0) / (s1 - s0)
    p1 = _piece(j1, s0, False)
    q1 = _piece(j1, s1, True)
    p2 = _piece(j2, u0, False)
    q2 = _piece(j2, u1, True)
    n1 = q1 - p1
    n2 = q2 - p2
    cuts = np.empty(n1 + n2 + 2)
    cuts[0] = s0
    i, j, m = p1, p2, 1
    while i < q1 or j < q2:
        ti = j1[i] if i < q1 else np.inf
        tj = s0 + (j2[j] - u0) / sig if j < q2 else np.inf
        if ti <= tj:
            cuts[m] = ti
            i += 1
        else:
            cuts[m] = min(max(tj, s0), s1)
            j += 1
        m += 1
    cuts[m] = s1
    m += 1
    best = 0.0
    off = u0 - sig * s0
    for k in range(m - 1):
        lo, hi = cuts[k], cuts[k + 1]
        if hi <= lo:
            continue
        mid = 0.5 * (lo + hi)
        k1 = _piece(j1, mid, False)
        k2 = _piece(j2, u0 + sig * (mid - s0), False)
        a0 = b1[k1] - b2[k2] - dr2 * off
        a1 = dr1 - dr2 * sig
        c0 = -off
        c1 = 1.0 - sig
        if weighted:
            v = _weighted_sup(a0, a1, c0, c1, lo, hi)
        else:
            v = max(math.hypot(a0 + a1 * lo, c0 + c1 * lo),
                    math.hypot(a0 + a1 * hi, c0 + c1 * hi))
            v = _capped(v)
        if v > best:
            best = v
    if last:
        k1 = _piece(j1, s1, False)
        k2 = _piece(j2, u1, False)
        gap = math.hypot(b1[k1] + dr1 * s1 - b2[k2] - dr2 * u1, s1 - u1)
        v = _capped(gap)
        if weighted:
            v *= math.exp(-abs(s1))
        if v > best:
            best = v
    return best


@njit
def slope_cost(s0, s1, u0, u1, weighted):
    c = abs((u1 - u0) / (s1 - s0) - 1.0)
    if weighted:
        if s0 <= 0.0 <= s1:
            return c
        return c * math.exp(-min(abs(s0), abs(s1)))
    return c


# ----------------------------------------------------------------- DP -----
@njit
def _search(x1, x2, j1, b1, dr1, j2, b2, dr2, weighted, window, thr, base, cutoff):
    n1, n2 = x1.shape[0], x2.shape[0]
    nt = thr.shape[0]
    lo = np.zeros(n1, dtype=np.int64)
    hi = np.zeros(n1, dtype=np.int64)
    off = np.zeros(n1 + 1, dtype=np.int64)
    budget = cutoff - base
    for i in range(n1):
        wgt = math.exp(-abs(x1[i])) if weighted else 1.0
        # states whose own time gap already costs the budget cannot help
        if budget > wgt:
            r = np.inf
        else:
            r = budget / wgt
        a = 0
        while a < n2 and x2[a] <= x1[i] - r:
            a += 1
        b = a
        while b < n2 and x2[b] < x1[i] + r:
            b += 1
        lo[i] = a
        hi[i] = b
        off[i + 1] = off[i] + (b - a)
    if not (lo[0] == 0 < hi[0]) or not (lo[n1 - 1] < n2 == hi[n1 - 1]):
        return np.inf
    total = off[n1]
    bb = np.full((total, nt), np.inf)
    bs = np.full((total, nt), np.inf)
    for k in range(nt):
        bb[0, k] = 0.0
        bs[0, k] = 0.0
    for i in range(n1 - 1):
        for j in range(lo[i], hi[i]):
            cur = off[i] + j - lo[i]
            alive = False
            for k in range(nt):
                if bb[cur, k] < np.inf:
                    alive = True
            if not alive:
                continue
            for di in range(1, window + 1):
                ii = i + di
                if ii >= n1:
                    break
                for dj in range(1, window + 1):
                    jj = j + dj
                    if jj >= n2:
                        break
                    if jj < lo[ii] or jj >= hi[ii]:
                        continue
                    sc = slope_cost(x1[i], x1[ii], x2[j], x2[jj], weighted)
                    if sc >= budget:
                        continue
                    nxt = off[ii] + jj - lo[ii]
                    last = ii == n1 - 1 and jj == n2 - 1
                    cost = -1.0
                    for k in range(nt):
                        if sc > thr[k] or bb[cur, k] == np.inf:
                            continue
                        if cost < 0.0:
                            cost = segment_cost(j1, b1, dr1, j2, b2, dr2, x1[i], x1[ii],
                                                x2[j], x2[jj], last, weighted)
                        nb = max(bb[cur, k], cost)
                        ns = max(bs[cur, k], sc)
                        if nb + ns >= budget:
                            continue
                        if nb < bb[nxt, k] or (nb == bb[nxt, k] and ns < bs[nxt, k]):
                            bb[nxt, k] = nb
                            bs[nxt, k] = ns
    end = total - 1
    best = np.inf
    for k in range(nt):
        v = bb[end, k] + bs[end, k]
        if v < best:
            best = v
    return base + best


# --------------------------------------------------------- components -----
@dataclass(frozen=True)
class _Fn:
    start: float
    stop: float
    jt: np.ndarray
    base: np.ndarray
    drift: float


def _trajectory(p, stop):
    jt = p.jump_times[p.jump_times <= stop]
    base = np.concatenate([[p.x0], p.jump_values[: jt.size]])
    return _Fn(p.birth, stop, jt, base, 0.0)


def _age(p, stop):
    ot = p.origin_times[p.origin_times <= stop]
    base = -np.concatenate([[p.origin0], p.origins[: ot.size]])
    return _Fn(p.birth, stop, ot, base, 1.0)


def _grids(f, g, h):
    a, b, c, d = f.start, f.stop, g.start, g.stop
    same = a == c and b == d
    to2 = (lambda t: t) if same else (lambda t: c + (t - a) * ((d - c) / (b - a)))
    to1 = (lambda u: u) if same else (lambda u: a + (u - c) * ((b - a) / (d - c)))
    j1 = f.jt[(f.jt > a) & (f.jt < b)]
    j2 = g.jt[(g.jt > c) & (g.jt < d)]
    n_uni = max(int(math.floor((b - a) / h)), 1)
    uni = a + (b - a) * np.arange(1, n_uni) / n_uni
    pre = to1(j2)
    pts = np.concatenate([pre, j1, uni])
    tag = np.concatenate([np.arange(j2.size), np.full(j1.size + uni.size, -1)])
    pts, first = np.unique(pts, return_index=True)
    tag = tag[first]
    keep = (pts > a) & (pts < b)
    pts, tag = pts[keep], tag[keep]
    x1 = np.concatenate([[a], pts, [b]])
    x2 = np.concatenate([[c], to2(pts), [d]])
    snap = np.flatnonzero(tag >= 0)
    x2[snap + 1] = j2[tag[snap]]
    # snapping can only move points by rounding error; keep strict order
    ok = np.concatenate([[True], (np.diff(x1) > 0) & (np.diff(x2) > 0)])
    ok[-1] = True
    return x1[ok], x2[ok]


def _directed(f, g, opts, weighted, base, cutoff):
    slope_aff = slope_cost(f.start, f.stop, g.start, g.stop, weighted)
    aff = base + slope_aff + segment_cost(f.jt, f.base, f.drift, g.jt, g.base, g.drift,
                                          f.start, f.stop, g.start, g.stop, True, weighted)
    best = aff
    thr = np.array(sorted(set(opts.thresholds) | {slope_aff}), dtype=np.float64)
    for h in opts.ladder():
        lim = min(best, cutoff)
        x1, x2 = _grids(f, g, h)
        v = _search(x1, x2, f.jt, f.base, f.drift, g.jt, g.base, g.drift, weighted,
                    opts.window, thr, base, lim)
        best = min(best, v)
    return best


def _point_gap(f, g, weighted):
    dx = f.base[-1] + f.drift * f.start - g.base[-1] - g.drift * g.start
    v = _capped(math.hypot(dx, f.start - g.start))
    if weighted:
        v *= math.exp(-min(abs(f.start), abs(g.start)))
    return v


def _fn_distance(f, g, opts, weighted, base, cutoff):
    f_point, g_point = not f.stop > f.start, not g.stop > g.start
    if f_point or g_point:
        # a single point maps onto nothing but a single point
        return base + _point_gap(f, g, weighted) if f_point and g_point else math.inf
    fw = _directed(f, g, opts, weighted, base, cutoff)
    if fw >= cutoff:
        return fw
    bw = _directed(g, f, opts, weighted, base, cutoff)
    return max(fw, bw)


def _finite_end(p):
    if not math.isfinite(p.end):
        raise ValueError("metric_d needs paths with a finite domain")
    return p.end


def metric_d(p, q, opts=None, aged=True, cutoff=math.inf):
    """Rectangle metric between two aged paths (``None`` is the empty path).

    With ``aged`` the result is the larger of the trajectory and age distances.
    A finite ``cutoff`` lets the search stop early: any value at or above the
    cutoff may then be returned in place of the exact result.
    """
    opts = opts or MetricOptions()
    if p is None or q is None:
        return 0.0 if p is None and q is None else 1.0
    base = abs(p.birth - q.birth)
    sp, sq = _finite_end(p), _finite_end(q)
    v = _fn_distance(_trajectory(p, sp), _trajectory(q, sq), opts, False, base, cutoff)
    if aged and v < cutoff:
        v = max(v, _fn_distance(_age(p, sp), _age(q, sq), opts, False, base, cutoff))
    return v


def metric_d1(p, q, opts=None, aged=True, horizon=D1_HORIZON, cutoff=math.inf):
    """Compactified metric: exponentially discounted gaps plus a tanh birth term.

    Infinite domains are cut where the discount drops below 1e-12.
    """
    opts = opts or MetricOptions()
    if p is None or q is None:
        return 0.0 if p is None and q is None else 1.0
    base = abs(math.tanh(p.birth) - math.tanh(q.birth))
    sp = min(p.end, max(horizon, p.birth + 1.0))
    sq = min(q.end, max(horizon, q.birth + 1.0))
    v = _fn_distance(_trajectory(p, sp), _trajectory(q, sq), opts, True, base, cutoff)
    if aged and v < cutoff:
        v = max(v, _fn_distance(_age(p, sp), _age(q, sq), opts, True, base, cutoff))
    return v


# ---------------------------------------------------------------- rho -----
def projections(path, n_max):
    """Per-level projections of one path; ``None`` marks an empty projection."""
    from .paths import PathCollection

    out = []
    for N in range(1, n_max + 1):
        pc = project(PathCollection((path,)), N)
        out.append(pc.paths[0] if len(pc) else None)
    return out


def rho_from_projections(pp, qq, opts, cutoff=math.inf):
    total = 0.0
    for N, (a, b) in enumerate(zip(pp, qq), start=1):
        w = 2.0 ** -N
        if a is None and b is None:
            continue
        if a is None or b is None:
            term = 1.0
        elif a == b:
            continue
        else:
            budget = (cutoff - total) / w
            term = min(1.0, metric_d(a, b, opts, cutoff=min(budget, 1.0)))
        total += w * term
        if total >= cutoff:
            return total
    return total


def metric_rho(p, q, opts=None, with_bound=False):
    """Series over levels N of min(1, d) between the level-N projections.

    The series is cut after ``opts.n_max`` terms; the neglected tail is at most
    ``2**-n_max`` and is returned alongside the value with ``with_bound``.
    """
    opts = opts or MetricOptions()
    v = rho_from_projections(projections(p, opts.n_max), projections(q, opts.n_max), opts)
    return (v, 2.0 ** -opts.n_max) if with_bound else v


def _directed_hausdorff(P, Q, opts):
    worst = 0.0
    for pp in P:
        best = math.inf
        for qq in Q:
            best = min(best, rho_from_projections(pp, qq, opts, cutoff=best))
            if best <= worst:
                break
        worst = max(worst, best)
    return worst


def hausdorff(c1, c2, opts=None):
    """Hausdorff distance under rho; 0 for two empty collections, 1 for one."""
    opts = opts or MetricOptions()
    if len(c1) == 0 or len(c2) == 0:
        return 0.0 if len(c1) == len(c2) else 1.0
    P = [projections(p, opts.n_max) for p in c1]
    Q = [projections(q, opts.n_max) for q in c2]
    return max(_directed_hausdorff(P, Q, opts), _directed_hausdorff(Q, P, opts))
