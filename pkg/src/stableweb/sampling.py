"""Symmetric stable variates and heavy-tailed lattice increments."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as _gamma

from ._accel import njit
from .rng import DOMAIN_CALIBRATE, philox4x64, to_unit, u01

GUIDE_SIZE = 4096


class ConfigurationError(ValueError):
    """Invalid law parameters."""


class CalibrationError(RuntimeError):
    """Tail-constant calibration could not bracket the target scale."""

    def __init__(self, message, residuals):
        super().__init__(f"{message}; residuals={residuals}")
        self.residuals = residuals


def scale_root(n, alpha):
    """n^(1/alpha), snapped to the nearest integer when it is one up to rounding."""
    root = float(n) ** (1.0 / alpha)
    near = round(root)
    return float(near) if abs(root - near) <= 1e-9 * root else root


def _check_alpha(alpha):
    if not 1.0 < alpha < 2.0:
        raise ConfigurationError(f"alpha must lie in (1, 2), got {alpha}")


@dataclass(frozen=True)
class StableLaw:
    """Symmetric stable law with E exp(i theta X) = exp(-(scale |theta|)^alpha)."""

    alpha: float
    scale: float = 1.0

    def __post_init__(self):
        _check_alpha(self.alpha)
        if not self.scale > 0:
            raise ConfigurationError(f"scale must be positive, got {self.scale}")

    def char_fn(self, theta, dt=1.0):
        return np.exp(-dt * np.abs(self.scale * np.asarray(theta)) ** self.alpha)


def _cms(alpha, v, w):
    # Chambers-Mallows-Stuck, symmetric case
    return (np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha))


def sample_stable_many(law, dt, rng, size):
    """``size`` independent draws of the stable increment over a duration ``dt``."""
    if not dt > 0:
        raise ValueError(f"duration must be positive, got {dt}")
    words = rng.blocks(size)
    v = math.pi * (to_unit(words[:, 0]) - 0.5)
    w = -np.log1p(-to_unit(words[:, 1]))
    # v = -pi/2 exactly has probability 2^-53; nudge off the pole
    v = np.where(v <= -math.pi / 2, -math.pi / 2 + 1e-300, v)
    return law.scale * dt ** (1.0 / law.alpha) * _cms(law.alpha, v, w)


def sample_stable(law, dt, rng):
    """One stable displacement over ``dt``; consumes one counter block."""
    return float(sample_stable_many(law, dt, rng, 1)[0])


@dataclass(frozen=True, eq=False)
class IncrementLaw:
    """Symmetric lattice law with p(x) = C |x|^-(1+alpha) for 1 <= |x| <= x_max.

    Beyond ``x_max`` the law is the continuous envelope C y^-(1+alpha) on
    [x_max + 1/2, inf) rounded to the nearest integer, so the support is
    unbounded while the table stays finite. ``p0`` absorbs the remainder.
    """

    alpha: float
    tail_constant: float
    x_max: int
    probabilities: np.ndarray = field(repr=False)  # p(m) for m = 0..x_max
    tail_mass: float  # one-sided mass beyond x_max
    cdf_abs: np.ndarray = field(repr=False)  # P(|Z| <= m)
    guide: np.ndarray = field(repr=False)

    @property
    def p0(self):
        return float(self.probabilities[0])

    def pmf(self, x):
        x = abs(int(x))
        if x <= self.x_max:
            return float(self.probabilities[x])
        c, a = self.tail_constant, self.alpha
        return c / a * ((x - 0.5) ** -a - (x + 0.5) ** -a)

    def tail_prob(self, m):
        """P(|Z| >= m) for m >= 1."""
        m = int(m)
        if m > self.x_max:
            c, a = self.tail_constant, self.alpha
            return 2.0 * c / a * (m - 0.5) ** -a
        return float(1.0 - (self.cdf_abs[m - 1] if m >= 1 else 0.0))

    def tables(self):
        """Arguments for the compiled step sampler."""
        return (self.cdf_abs, self.guide, float(self.x_max) + 0.5,
                self.alpha, 2.0 * self.tail_mass)


def build_increment_law(alpha, tail_constant, x_max=1000):
    _check_alpha(alpha)
    if not tail_constant > 0:
        raise ConfigurationError(f"tail_constant must be positive, got {tail_constant}")
    if int(x_max) < 10:
        raise ConfigurationError(f"x_max must be at least 10, got {x_max}")
    x_max = int(x_max)
    m = np.arange(1, x_max + 1, dtype=np.float64)
    side = tail_constant * m ** -(1.0 + alpha)
    tail = tail_constant / alpha * (x_max + 0.5) ** -alpha
    off_zero = 2.0 * (math.fsum(side) + tail)
    if off_zero >= 1.0:
        raise ConfigurationError(
            f"tail_constant {tail_constant} infeasible: off-zero mass {off_zero:.6f} >= 1")
    probs = np.empty(x_max + 1)
    probs[0] = 1.0 - off_zero
    probs[1:] = side
    cdf = np.empty(x_max + 1)
    cdf[0] = probs[0]
    cdf[1:] = probs[0] + 2.0 * np.cumsum(side)
    grid = np.arange(GUIDE_SIZE) / GUIDE_SIZE
    guide = np.searchsorted(cdf, grid, side="right").astype(np.int64)
    np.minimum(guide, x_max, out=guide)
    return IncrementLaw(alpha, float(tail_constant), x_max, probs, tail, cdf, guide)


def max_tail_constant(alpha, x_max=1000):
    """Largest C for which p(0) stays nonnegative."""
    m = np.arange(1, int(x_max) + 1, dtype=np.float64)
    per_c = 2.0 * (math.fsum(m ** -(1.0 + alpha)) + (x_max + 0.5) ** -alpha / alpha)
    return 1.0 / per_c


@njit
def draw_step(word, cdf, guide, tail_x0, alpha, tail_total):
    """Signed lattice step from one raw word: top 53 bits pick |Z|, bit 0 the sign."""
    u = u01(word)
    top = cdf.shape[0] - 1
    if u < cdf[top]:
        m = guide[int(u * guide.shape[0])]
        while cdf[m] <= u:
            m += 1
    else:
        r = (1.0 - u) / tail_total
        if r > 1.0:
            r = 1.0
        y = tail_x0 * r ** (-1.0 / alpha)
        if y > 4.0e18:
            y = 4.0e18
        m = int(math.floor(y + 0.5))
    if word & np.uint64(1):
        return -m
    return m


def steps_from_words(law, words):
    """Numpy twin of ``draw_step`` for a vector of raw words."""
    words = np.asarray(words, dtype=np.uint64)
    u = to_unit(words)
    cdf = law.cdf_abs
    top = cdf[-1]
    m = np.searchsorted(cdf, u, side="right").astype(np.int64)
    tail = u >= top
    if np.any(tail):
        r = np.minimum((1.0 - u[tail]) / (2.0 * law.tail_mass), 1.0)
        y = np.minimum((law.x_max + 0.5) * r ** (-1.0 / law.alpha), 4.0e18)
        m[tail] = np.floor(y + 0.5).astype(np.int64)
    neg = (words & np.uint64(1)).astype(bool)
    return np.where(neg, -m, m)


def sample_increment(law, rng):
    """One integer step distributed as p; consumes one counter block."""
    return int(steps_from_words(law, rng.blocks(1)[:, 0])[0])


def sample_increments(law, rng, size):
    return steps_from_words(law, rng.blocks(-(-size // 4)).ravel()[:size])


def analytic_tail_constant(law):
    """Closed-form C for the Levy density C|x|^-(1+alpha) of ``law`` in the continuum.

    Used as the starting point of the calibration and as a cross-check.
    """
    a = law.alpha
    k = -_gamma(-a) * math.cos(math.pi * a / 2.0)
    return law.scale ** a / (2.0 * k)


@njit
def _walk_cf_kernel(n_steps, replicas, seed, stream, thetas, norm,
                    cdf, guide, tail_x0, alpha, tail_total):
    out = np.zeros(thetas.shape[0])
    dom = np.uint64(DOMAIN_CALIBRATE)
    zero = np.uint64(0)
    per_rep = (n_steps + 3) // 4
    for r in range(replicas):
        s = 0
        base = r * per_rep
        j = 0
        for b in range(per_rep):
            w = philox4x64(np.uint64(base + b), dom, zero, zero, seed, stream)
            for q in range(4):
                if j < n_steps:
                    s += draw_step(w[q], cdf, guide, tail_x0, alpha, tail_total)
                    j += 1
        x = s / norm
        for i in range(thetas.shape[0]):
            out[i] += math.cos(thetas[i] * x)
    return out / replicas


def walk_char_fn(law, n_steps, replicas, thetas, seed=0, stream_id=0):
    """Empirical characteristic function of W_n / n^(1/alpha) at ``thetas``."""
    thetas = np.asarray(thetas, dtype=np.float64)
    return _walk_cf_kernel(int(n_steps), int(replicas), np.uint64(seed), np.uint64(stream_id),
                           thetas, scale_root(n_steps, law.alpha), *law.tables())


def empirical_scale(law, n_steps, replicas, thetas=(0.5, 1.0, 2.0), seed=0):
    """Scale of the rescaled walk read off its empirical characteristic function."""
    thetas = np.asarray(thetas, dtype=np.float64)
    phi = walk_char_fn(law, n_steps, replicas, thetas, seed)
    phi = np.clip(phi, 1e-12, 1.0)
    per_theta = (-np.log(phi)) ** (1.0 / law.alpha) / thetas
    return float(np.mean(per_theta)), per_theta


def calibrate_tail_constant(law, n_steps=2 ** 14, replicas=10 ** 5, seed=0,
                            thetas=(0.5, 1.0, 2.0), x_max=1000, rtol=2e-3,
                            max_iter=60, initial=None):
    """Bisect on C until the rescaled walk's empirical scale matches ``law.scale``.

    Every evaluation reuses the same counter-based draws, so the objective is a
    deterministic function of C and re-running from its own output is stable.
    """
    if not isinstance(law, StableLaw):
        law = StableLaw(*law)
    c_cap = max_tail_constant(law.alpha, x_max) * (1.0 - 1e-9)
    c0 = analytic_tail_constant(law) if initial is None else float(initial)
    hi = min(c0 * 1.5, c_cap)
    lo = min(c0, hi) / 1.5

    def resid(c):
        il = build_increment_law(law.alpha, c, x_max)
        est, per_theta = empirical_scale(il, n_steps, replicas, thetas, seed)
        return est - law.scale, per_theta

    f_lo, _ = resid(lo)
    f_hi, _ = resid(hi)
    widen = 0
    while (f_lo > 0 or f_hi < 0) and widen < 4:
        if f_lo > 0:
            lo /= 2.0
            f_lo, _ = resid(lo)
        if f_hi < 0:
            if hi >= c_cap:
                break
            hi = min(hi * 2.0, c_cap)
            f_hi, _ = resid(hi)
        widen += 1
    if f_lo > 0 or f_hi < 0:
        raise CalibrationError(
            f"could not bracket scale {law.scale} with C in [{lo:.4g}, {hi:.4g}]",
            {"C_lo": lo, "resid_lo": f_lo, "C_hi": hi, "resid_hi": f_hi})
    for _ in range(max_iter):
        if hi / lo - 1.0 < rtol:
            break
        mid = math.sqrt(lo * hi)
        f_mid, _ = resid(mid)
        if f_mid > 0:
            hi = mid
        else:
            lo = mid
    return math.sqrt(lo * hi)

