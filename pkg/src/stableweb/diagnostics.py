"""Monte Carlo estimators and compactness checks on simulated systems."""

import math
from dataclasses import dataclass, field

import numpy as np

from ._accel import njit
from .engine import EngineConfig, compute_ages, full_occupancy, lattice_grid, simulate, StartSet
from .metrics import MetricOptions, hausdorff, metric_d, modulus
from .operators import Rectangle, entry_time, project, translate
from .paths import AgedPath
from .rng import DOMAIN_INCREMENT, philox4x64, stream_key
from .sampling import ConfigurationError, draw_step, scale_root

TAG_LAPLACE = 1
TAG_GREEN = 2


# ------------------------------------------------------------ density -----
@dataclass(frozen=True)
class DensityEstimate:
    t: float
    half_width: float
    count: float  # mean count per replica
    density: float
    stderr: float
    replicas: int

    @property
    def interval(self):
        return (self.density - 1.96 * self.stderr, self.density + 1.96 * self.stderr)


@dataclass
class CountRuns:
    """Per-replica live-walker counts by origin class at fixed sample times."""

    times: np.ndarray
    origins: np.ndarray  # birth-time classes, sorted
    counts: np.ndarray  # (replicas, times, origins)
    sites: int  # lattice sites covered by the count window
    spacing: float

    @property
    def replicas(self):
        return self.counts.shape[0]


def density_runs(cfg, replicas, times, ages=(), sites=None, first_replica=0, mapper=map):
    """Full-occupancy runs from time 0, plus full-occupancy cohorts at ``max(times) - ages``.

    Older walkers have precedence, so the cohorts never disturb walkers of
    earlier origin; the counts of origin class 0 are those of a plain full
    occupancy start.
    """
    times = np.sort(np.asarray(times, dtype=np.float64))
    if times.size == 0 or not times[0] > 0:
        raise ValueError("sample times must be positive")
    t_star = float(times[-1])
    cohorts = sorted({0.0} | {t_star - float(a) for a in ages})
    if cohorts[0] < 0 or cohorts[-1] >= t_star:
        raise ValueError("cohort ages must lie in (0, max(times)]")
    cfg = EngineConfig(**{**cfg.__dict__, "horizon": t_star})
    base = full_occupancy(cfg, 0.0, sites)
    starts = StartSet(np.concatenate([np.full(len(base), c) for c in cohorts]),
                      np.tile(base.site, len(cohorts)), 0)
    origins = np.array(cohorts)
    def one(r):
        rc = EngineConfig(**{**cfg.__dict__, "seed": stream_key(cfg.seed, r)})
        return simulate(rc, starts, sample_times=times, record=False,
                        origin_levels=origins).counts

    out = list(mapper(one, range(first_replica, first_replica + replicas)))
    return CountRuns(times, origins, np.array(out), len(base), cfg.spacing)


def _per_replica_counts(runs, t, origin_max=math.inf, window=None, center=0.0):
    if isinstance(runs, CountRuns):
        if window is not None:
            raise ValueError("count runs cover a fixed window")
        k = np.flatnonzero(np.isclose(runs.times, t, rtol=0, atol=1e-12))
        if k.size == 0:
            raise ValueError(f"time {t} was not sampled")
        cls = runs.origins <= origin_max
        return runs.counts[:, k[0], cls].sum(axis=1).astype(float), runs.sites * runs.spacing
    vals = []
    width = None
    for s in runs:
        if t < s.birth_t.min():
            raise ValueError(f"time {t} precedes every birth")
        circ = s.config.circumference
        ids, pos = s.positions_at(t)
        pos = pos[_origins_at(s, t)[ids] <= origin_max] * s.spacing
        L = circ * s.spacing
        x = (pos - center + L / 2) % L - L / 2
        if window is None:
            vals.append(x.size)
            width = L
        else:
            if not 2 * window <= L / 8:
                raise ValueError("window outside the guard region")
            vals.append(np.count_nonzero(np.abs(x) <= window))
            width = 2 * window
    return np.array(vals, dtype=float), width


def _origins_at(system, t):
    origin = system.birth_t.copy()
    ev = system.events
    for tt, x, y in zip(ev["t"], ev["absorbed"], ev["survivor"]):
        if tt > t:
            break
        m = min(origin[x], origin[y])
        origin[x] = origin[y] = m
    return origin


def estimate_density(runs, t, window=None, center=0.0):
    """Live walkers per unit length at time ``t``, averaged over replicas.

    For count runs only the walkers of the initial full occupancy are counted,
    so injected cohorts do not enter.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    born_by = float(runs.origins[0]) if isinstance(runs, CountRuns) else math.inf
    c, width = _per_replica_counts(runs, t, born_by, window, center)
    return _estimate(t, c, width)


def _estimate(t, c, width):
    dens = c / width
    se = float(dens.std(ddof=1) / math.sqrt(dens.size)) if dens.size > 1 else math.nan
    return DensityEstimate(float(t), width / 2, float(c.mean()), float(dens.mean()), se, dens.size)


def estimate_age_density(runs, t, band, window=None, center=0.0, tol=1e-12):
    """Density at time ``t`` of walkers whose age lies in ``[lo, hi)``.

    A walker's age at ``t`` is ``t`` minus the earliest birth in its cluster,
    so with cohorts born at discrete times the band is half-open on the right.
    """
    lo, hi = map(float, band)
    if not 0 <= lo < hi:
        raise ValueError("band must satisfy 0 <= lo < hi")
    oldest = runs.origins.min() if isinstance(runs, CountRuns) else min(s.birth_t.min()
                                                                       for s in runs)
    if hi > t - oldest + tol:
        raise ValueError(f"band upper end {hi} exceeds the largest possible age {t - oldest}")
    at_least_lo, width = _per_replica_counts(runs, t, t - lo + tol, window, center)
    at_least_hi, _ = _per_replica_counts(runs, t, t - hi + tol, window, center)
    return _estimate(t, at_least_lo - at_least_hi, width)


def density_slope(estimates):
    """Least-squares slope of log density against log time."""
    t = np.log([e.t for e in estimates])
    d = np.log([e.density for e in estimates])
    return float(np.polyfit(t, d, 1)[0])


def age_band_ratio(runs, t, a, alpha):
    """Observed and predicted count ratio of age bands [a, 2a) over [2a, 4a)."""
    b1 = estimate_age_density(runs, t, (a, 2 * a))
    b2 = estimate_age_density(runs, t, (2 * a, 4 * a))
    p = 1.0 / alpha
    predicted = (a ** -p - (2 * a) ** -p) / ((2 * a) ** -p - (4 * a) ** -p)
    return b1.density / b2.density, predicted


# ------------------------------------------------------ meeting times -----
@dataclass(frozen=True)
class LaplaceEstimate:
    beta: float
    scale_n: int
    replicas: int
    estimate: float
    stderr: float
    lower: float
    upper: float
    censored: int
    status: str = "ok"

    @property
    def half_width(self):
        return (self.upper - self.lower) / 2


@njit
def _meeting_kernel(d0, max_steps, keys, seed, cdf, guide, tail_x0, alpha, tail_total):
    out = np.full(keys.shape[0], -1, dtype=np.int64)
    dom = np.uint64(DOMAIN_INCREMENT)
    z = np.uint64(0)
    for r in range(keys.shape[0]):
        d = d0
        if d == 0:
            out[r] = 0
            continue
        j = 0
        ctr = np.uint64(0)
        while j < max_steps:
            b = philox4x64(ctr, dom, z, z, seed, keys[r])
            ctr += np.uint64(1)
            d += draw_step(b[0], cdf, guide, tail_x0, alpha, tail_total)
            d -= draw_step(b[1], cdf, guide, tail_x0, alpha, tail_total)
            j += 1
            if d == 0:
                out[r] = j
                break
            if j >= max_steps:
                break
            d += draw_step(b[2], cdf, guide, tail_x0, alpha, tail_total)
            d -= draw_step(b[3], cdf, guide, tail_x0, alpha, tail_total)
            j += 1
            if d == 0:
                out[r] = j
                break
    return out


def meeting_steps(law, n, u, replicas, horizon=8.0, seed=0):
    """Step at which two independent walks from 0 and floor(n^(1/alpha) u) first meet.

    Returns -1 for pairs still apart after ``horizon * n`` steps.
    """
    d0 = int(math.floor(scale_root(n, law.alpha) * u))
    keys = np.array([stream_key(TAG_LAPLACE, seed, n, d0, r) for r in range(replicas)],
                    dtype=np.uint64)
    return _meeting_kernel(d0, int(math.ceil(horizon * n)), keys, np.uint64(seed), *law.tables())


def laplace_from_steps(steps, n, beta, horizon):
    met = steps >= 0
    vals = np.where(met, np.exp(-beta * steps / float(n)), 0.0)
    R = steps.size
    cens = int(np.count_nonzero(~met))
    tail = math.exp(-beta * horizon)
    lower = float(vals.mean())
    upper = lower + cens * tail / R
    est = (lower + upper) / 2
    se = float(np.where(met, vals, tail / 2).std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0
    status = "widened" if upper - lower > se else "ok"
    return LaplaceEstimate(float(beta), int(n), int(R), est, se, lower - 1.96 * se,
                           upper + 1.96 * se, cens, status)


def estimate_coalescence_laplace(law, u, betas, scales, replicas, horizon=8.0, seed=0):
    """E exp(-beta T_n) for the rescaled meeting time, with censoring shown as an interval.

    All betas share the same simulated meeting times.
    """
    if u < 0:
        raise ValueError("separation must be nonnegative")
    if any(not b > 0 for b in betas):
        raise ValueError("beta must be positive")
    out = []
    for n in scales:
        steps = meeting_steps(law, n, u, replicas, horizon, seed)
        out.extend(laplace_from_steps(steps, n, b, horizon) for b in betas)
    return out


def within_joint_sigma(e1, e2, k=3.0):
    return abs(e1.estimate - e2.estimate) <= k * math.hypot(e1.stderr, e2.stderr)


# -------------------------------------------------------------- green -----
@dataclass(frozen=True)
class GreenEstimate:
    u: float
    beta: float
    scale_n: int
    replicas: int
    estimate: float
    stderr: float
    status: str = "ok"


@njit
def _green_kernel(target, max_steps, n, betas, keys, seed, cdf, guide, tail_x0, alpha, tail_total):
    out = np.zeros((keys.shape[0], betas.shape[0]))
    dom = np.uint64(DOMAIN_INCREMENT)
    z = np.uint64(0)
    for r in range(keys.shape[0]):
        w = 0
        if target == 0:
            for k in range(betas.shape[0]):
                out[r, k] += 1.0
        j = 0
        ctr = np.uint64(0)
        while j < max_steps:
            b = philox4x64(ctr, dom, z, z, seed, keys[r])
            ctr += np.uint64(1)
            for q in range(4):
                w += draw_step(b[q], cdf, guide, tail_x0, alpha, tail_total)
                j += 1
                if w == target:
                    for k in range(betas.shape[0]):
                        out[r, k] += math.exp(-betas[k] * j / n)
                if j >= max_steps:
                    break
    return out


def estimate_green(law, u, betas, n, replicas, seed=0, horizon_factor=10.0):
    """Discounted occupation of the site nearest u n^(1/alpha), scaled by n^(1/alpha - 1).

    The target site truncates toward zero so that u and -u are mirror images.
    The sum is cut at ``horizon_factor / min(betas)`` rescaled time units.
    """
    betas = np.asarray(betas, dtype=np.float64)
    if np.any(betas <= 0):
        raise ValueError("beta must be positive")
    if n < 2 ** 8:
        raise ValueError("n must be at least 2^8")
    target = int(scale_root(n, law.alpha) * u)
    max_steps = int(math.ceil(horizon_factor / betas.min() * n))
    keys = np.array([stream_key(TAG_GREEN, seed, n, r) for r in range(replicas)], dtype=np.uint64)
    sums = _green_kernel(target, max_steps, float(n), betas, keys, np.uint64(seed), *law.tables())
    sums *= scale_root(n, law.alpha) / n
    out = []
    for k, b in enumerate(betas):
        v = sums[:, k]
        se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
        status = "ok" if math.isfinite(se) and math.isfinite(v.mean()) else "widened"
        out.append(GreenEstimate(float(u), float(b), int(n), int(replicas), float(v.mean()),
                                 se, status))
    return out


# -------------------------------------------------------- compactness -----
R_MAX = 12


@dataclass(frozen=True)
class CompactnessProfile:
    """Per-level sequences: eps[N], M[N] and delta_mod[N][r-1] for r = 1..r_max."""

    eps: dict
    M: dict
    delta_mod: dict

    def __post_init__(self):
        for N in self.eps:
            if not (self.eps[N] > 0 and self.M[N] > 0):
                raise ConfigurationError(f"eps and M must be positive at N={N}")
            d = np.asarray(self.delta_mod[N], dtype=float)
            if np.any(d < 0) or np.any(np.diff(d) > 0):
                raise ConfigurationError(f"delta_mod must be nonnegative and nonincreasing at N={N}")

    def covers(self, levels):
        return all(N in self.eps and N in self.M and N in self.delta_mod for N in levels)

    def to_json(self):
        return {"eps": {str(k): v for k, v in self.eps.items()},
                "M": {str(k): v for k, v in self.M.items()},
                "delta_mod": {str(k): list(map(float, v)) for k, v in self.delta_mod.items()}}

    @classmethod
    def from_json(cls, obj):
        return cls({int(k): float(v) for k, v in obj["eps"].items()},
                   {int(k): float(v) for k, v in obj["M"].items()},
                   {int(k): tuple(float(x) for x in v) for k, v in obj["delta_mod"].items()})


@dataclass
class CompactnessReport:
    levels: tuple
    failures: dict = field(default_factory=dict)  # (N, condition) -> list of witnesses

    @property
    def passed(self):
        return not any(self.failures.values())

    def failed_conditions(self):
        return sorted({c for (_, c), w in self.failures.items() if w})

    def to_json(self):
        return {"passed": self.passed,
                "levels": list(self.levels),
                "failures": [{"N": N, "condition": c, "witnesses": w}
                             for (N, c), w in sorted(self.failures.items()) if w]}


CONDITIONS = ("i", "ii", "iii", "iv", "v", "vi", "vii", "viii", "ix")


def _max_age(p):
    return p.age_at(p.end)


def _omega(p, r, stop):
    e = p.birth
    d = 2.0 ** -r
    if d > stop - e:
        # no admissible partition: the window is a single cell
        k0 = np.searchsorted(p.jump_times, e, side="right")
        k1 = np.searchsorted(p.jump_times, stop, side="left")
        vals = np.concatenate([[p.value_at(e)], p.jump_values[k0:k1]])
        return float(vals.max() - vals.min())
    return modulus(p, d, (e, stop))


def _entry_margin(p, N):
    """Slack of the entry condition: (entry time, largest eps it tolerates)."""
    T = entry_time(p, Rectangle.square(N))
    if not T <= N:
        return None, math.inf
    slack = N - abs(p.value_at(T))
    start = max(p.birth, -N)
    if start < T:
        k0 = np.searchsorted(p.jump_times, start, side="right")
        k1 = np.searchsorted(p.jump_times, T, side="left")
        prior = np.concatenate([[p.value_at(start)], p.jump_values[k0:k1]])
        # prior values must stay strictly outside [-N - eps, N + eps]
        slack = min(slack, float(np.min(np.abs(prior))) - N - 1e-300)
    return T, slack


def _pre_jump_ages(p):
    prev = np.concatenate([[p.origin0], p.origins[:-1]])
    return p.origin_times - prev


def _age_band_hit(p, t0, level, eps):
    """Does the age come within the open band (level - eps, level + eps) for t within eps of t0?"""
    cuts = np.concatenate([[p.birth], p.origin_times, [p.end]])
    orig = np.concatenate([[p.origin0], p.origins])
    lo_w, hi_w = t0 - eps, t0 + eps
    for k in range(orig.size):
        a1, b1 = max(lo_w, cuts[k]), min(hi_w, cuts[k + 1])
        if a1 > b1:
            continue
        a2, b2 = orig[k] + level - eps, orig[k] + level + eps
        if max(a1, a2) < min(b1, b2) or (a1 == b1 and a2 < a1 < b2):
            return True
    return False


def _age_band_margin(p, N):
    level = 2.0 ** -N
    lo, hi = 0.0, 1.0
    if not any(_age_band_hit(p, t0, level, hi) for t0 in (-N, N)):
        return hi
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if any(_age_band_hit(p, t0, level, mid) for t0 in (-N, N)):
            hi = mid
        else:
            lo = mid
    return lo


def _time_restricted(p, start, stop):
    k0 = np.searchsorted(p.jump_times, start, side="right")
    k1 = np.searchsorted(p.jump_times, stop, side="right")
    return AgedPath(start, p.value_at(start), p.jump_times[k0:k1], p.jump_values[k0:k1],
                    end=stop)


def _stability_violations(p, N, eps, delta_row, opts):
    T, _ = _entry_margin(p, N)
    if T is None or T >= N:
        return []
    base = _time_restricted(p, T, N)
    bad = []
    for r in range(1, len(delta_row) + 1):
        dr = delta_row[r - 1]
        if not dr < eps / 2:
            continue
        for e1 in (0.0, dr / 2, dr):
            for e2 in (0.0, dr / 2, dr):
                if (e1 == 0 and e2 == 0) or T + e1 >= N + e2 or N + e2 > p.end:
                    continue
                v = metric_d(base, _time_restricted(p, T + e1, N + e2), opts, aged=False)
                if v > 2.0 ** -r:
                    bad.append({"walker": p.meta.get("walker"), "r": r, "eta": [e1, e2],
                                "d": v})
    return bad


def check_compactness(collection, profile, levels=(1, 2, 3), opts=None):
    """Evaluate conditions (i)-(ix) of the compact set defined by ``profile``."""
    levels = tuple(levels)
    if not profile.covers(levels):
        raise ConfigurationError(f"profile does not cover levels {levels}")
    opts = opts or MetricOptions()
    rep = CompactnessReport(levels)
    for N in levels:
        P = project(collection, N)
        P1 = project(collection, N + 1)
        eps, M, drow = profile.eps[N], profile.M[N], profile.delta_mod[N]
        f = {c: [] for c in CONDITIONS}
        if not len(P) < M:
            f["i"].append({"count": len(P)})
        for p in P:
            w = p.meta.get("walker")
            age = _max_age(p)
            if not age < M:
                f["ii"].append({"walker": w, "age": age})
            vals = np.concatenate([[p.x0], p.jump_values])
            if p.birth < -N or p.end > N or np.max(np.abs(vals)) > M:
                f["iii"].append({"walker": w, "max_abs": float(np.max(np.abs(vals)))})
            for r in range(1, len(drow) + 1):
                om = _omega(p, r, min(N, p.end))
                if om > drow[r - 1]:
                    f["iv"].append({"walker": w, "r": r, "omega": om})
            ot = p.origin_times
            if ot.size > 1 and np.min(np.diff(ot)) < eps:
                f["vii"].append({"walker": w, "gap": float(np.min(np.diff(ot)))})
        level = 2.0 ** -N
        for p in P1:
            w = p.meta.get("walker")
            _, slack = _entry_margin(p, N)
            if eps > slack:
                f["v"].append({"walker": w, "slack": slack})
            pre = _pre_jump_ages(p)
            if pre.size and np.any(np.abs(pre - level) <= eps):
                f["vi"].append({"walker": w, "age": float(pre[np.argmin(np.abs(pre - level))])})
            if any(_age_band_hit(p, t0, level, eps) for t0 in (-N, N)):
                f["viii"].append({"walker": w})
            f["ix"].extend(_stability_violations(p, N, eps, drow, opts))
        for c in CONDITIONS:
            rep.failures[(N, c)] = f[c]
    return rep


def compactness_sample(cfg, n_max=3, replica=0):
    """Aged paths from every lattice point of a window around [-n_max-1, n_max+1]^2.

    The sample is shifted by half a lattice cell in space and time so that no
    lattice value or birth time falls exactly on an integer boundary.
    """
    h = cfg.spacing
    rc = EngineConfig(**{**cfg.__dict__, "seed": stream_key(cfg.seed, replica),
                         "horizon": n_max + 1.25})
    starts = lattice_grid(rc, (-n_max - 3, n_max + 3), (-n_max - 2, n_max + 1))
    col = compute_ages(simulate(rc, starts), replica, min_age=2.0 ** -(n_max + 1))
    return translate(col, h / 2, h / 2)


def collection_statistics(collection, levels=(1, 2, 3), r_max=R_MAX):
    """Per-level extremes that a profile must accommodate.

    A profile passes conditions (i)-(viii) exactly when ``M`` exceeds
    ``count``, ``age`` and ``abs``, ``delta_mod`` dominates ``omega``, and
    ``eps`` is below ``gap`` and ``entry`` and strictly below ``prejump`` and
    ``band``.
    """
    out = {}
    for N in levels:
        P = project(collection, N)
        P1 = project(collection, N + 1)
        level = 2.0 ** -N
        st = {"count": len(P), "age": 0.0, "abs": 0.0, "omega": np.zeros(r_max),
              "gap": math.inf, "entry": math.inf, "prejump": math.inf, "band": math.inf}
        for p in P:
            st["age"] = max(st["age"], _max_age(p))
            vals = np.concatenate([[p.x0], p.jump_values])
            st["abs"] = max(st["abs"], float(np.max(np.abs(vals))))
            for r in range(1, r_max + 1):
                st["omega"][r - 1] = max(st["omega"][r - 1], _omega(p, r, min(N, p.end)))
            if p.origin_times.size > 1:
                st["gap"] = min(st["gap"], float(np.min(np.diff(p.origin_times))))
        for p in P1:
            st["entry"] = min(st["entry"], _entry_margin(p, N)[1])
            pre = _pre_jump_ages(p)
            if pre.size:
                st["prejump"] = min(st["prejump"], float(np.min(np.abs(pre - level))))
            st["band"] = min(st["band"], _age_band_margin(p, N))
        st["eps"] = min(st["gap"], st["entry"], st["prejump"], st["band"])
        out[N] = st
    return out


def profile_from_statistics(stats, levels=(1, 2, 3), quantile=0.999, size_headroom=2.0,
                            modulus_headroom=2.0, separation_headroom=10.0):
    """Profile from empirical extreme quantiles of per-replica statistics."""
    eps, M, dm = {}, {}, {}
    for N in levels:
        q = lambda key: np.quantile([s[N][key] for s in stats], quantile, method="higher")
        M[N] = float(size_headroom * max(q("count"), q("age"), q("abs"), N) + 1)
        sep = np.quantile([min(s[N]["eps"], 1.0) for s in stats], 1 - quantile, method="lower")
        eps[N] = max(float(sep) / separation_headroom, 1e-12)
        om = np.quantile(np.array([s[N]["omega"] for s in stats]), quantile, axis=0,
                         method="higher")
        dm[N] = tuple(_nonincreasing(modulus_headroom * om))
    return CompactnessProfile(eps, M, dm)


def fit_profile(collections, levels=(1, 2, 3), quantile=0.999, r_max=R_MAX, opts=None,
                **headroom):
    """Profile from empirical extreme quantiles over training collections.

    Where the restriction-stability condition fails on training data at some r,
    delta_N(r) is raised to eps_N/2 so that r is no longer constrained.
    """
    stats = [collection_statistics(c, levels, r_max) for c in collections]
    prof = profile_from_statistics(stats, levels, quantile, **headroom)
    opts = opts or MetricOptions()
    raised = {N: list(prof.delta_mod[N]) for N in levels}
    for c in collections:
        for N in levels:
            for p in project(c, N + 1):
                for v in _stability_violations(p, N, prof.eps[N], raised[N], opts):
                    raised[N][v["r"] - 1] = max(raised[N][v["r"] - 1], prof.eps[N] / 2)
    return CompactnessProfile(prof.eps, prof.M, {N: tuple(_nonincreasing(raised[N]))
                                                 for N in levels})


def _nonincreasing(v):
    return np.maximum.accumulate(np.asarray(v, dtype=float)[::-1])[::-1]


# ----------------------------------------------------------- skeleton -----
@dataclass(frozen=True)
class SkeletonGap:
    theta: float
    gaps: tuple  # one per replica

    @property
    def median(self):
        return float(np.median(self.gaps))

    @property
    def p90(self):
        return float(np.quantile(self.gaps, 0.9))


def skeleton_window(N, margin=2.0):
    return (-N - margin, N + margin), (-N - margin / 2, float(N))


def coupled_systems(cfg, thetas, N, replica=0, window=None):
    """Collections of the full lattice system and its embedded theta systems.

    Every theta must refine the previous one so that each skeleton's start set
    is a union of precedence levels of the full start set.
    """
    thetas = sorted((float(t) for t in thetas), reverse=True)
    space, time = window or skeleton_window(N)
    try:
        starts = lattice_grid(cfg, space, time, thetas)
    except ValueError as exc:
        raise ConfigurationError(f"theta systems are not coupled: {exc}") from None
    rc = EngineConfig(**{**cfg.__dict__, "seed": stream_key(cfg.seed, replica),
                         "horizon": float(N) + 0.25})
    min_age = 2.0 ** -N
    full = compute_ages(simulate(rc, starts), replica, min_age=min_age)
    parts = {}
    for k, th in enumerate(thetas):
        sub = starts.subset(starts.level <= k)
        parts[th] = compute_ages(simulate(rc, sub), replica, min_age=min_age)
    return full, parts


def skeleton_gap(cfg, thetas, N, replicas, opts=None, window=None, first_replica=0,
                 mapper=map):
    """Hausdorff distance between projections of the full system and each skeleton."""
    opts = opts or MetricOptions()

    def one(r):
        full, parts = coupled_systems(cfg, thetas, N, r, window)
        pf = project(full, N)
        return {th: hausdorff(pf, project(col, N), opts) for th, col in parts.items()}

    gaps = {float(t): [] for t in thetas}
    for res in mapper(one, range(first_replica, first_replica + replicas)):
        for th, g in res.items():
            gaps[th].append(g)
    return [SkeletonGap(th, tuple(g)) for th, g in sorted(gaps.items(), reverse=True)]
