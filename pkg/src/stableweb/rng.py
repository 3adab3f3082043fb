"""Counter-based random substreams (Philox4x64-10).

Every draw is a pure function of ``(seed, stream_id, counter)``: the key is
``(seed, stream_id)`` and the 256-bit counter is ``(counter, domain, 0, 0)``.
The engine gives each walker its own stream keyed by its start point, so adding
walkers never perturbs the randomness of the others.

The scalar kernel is numba-compiled; ``philox_blocks`` is the vectorized numpy
twin used for bulk draws. Both agree bit for bit with ``numpy.random.Philox``.
"""

from dataclasses import dataclass

import numpy as np

from ._accel import njit

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0
MASK64 = (1 << 64) - 1

# counter domains keep unrelated consumers of one key apart
DOMAIN_WALK = 0
DOMAIN_STABLE = 1
DOMAIN_INCREMENT = 2
DOMAIN_CALIBRATE = 3


@njit
def _mulhilo(a, b):
    a_lo = a & _MASK32
    a_hi = a >> _S32
    b_lo = b & _MASK32
    b_hi = b >> _S32
    lo_lo = a_lo * b_lo
    hi_lo = a_hi * b_lo
    lo_hi = a_lo * b_hi
    hi_hi = a_hi * b_hi
    cross = (lo_lo >> _S32) + (hi_lo & _MASK32) + lo_hi
    hi = hi_hi + (hi_lo >> _S32) + (cross >> _S32)
    return hi, a * b


@njit
def philox4x64(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox4x64 on one counter block."""
    for r in range(10):
        if r > 0:
            k0 = k0 + _W0
            k1 = k1 + _W1
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@njit
def u01(x):
    """Map a raw 64-bit word to a double in [0, 1)."""
    return float(x >> _S11) * _INV53


def _mulhilo_np(a, b):
    a_lo = a & _MASK32
    a_hi = a >> _S32
    b_lo = b & _MASK32
    b_hi = b >> _S32
    lo_lo = a_lo * b_lo
    hi_lo = a_hi * b_lo
    lo_hi = a_lo * b_hi
    hi_hi = a_hi * b_hi
    cross = (lo_lo >> _S32) + (hi_lo & _MASK32) + lo_hi
    hi = hi_hi + (hi_lo >> _S32) + (cross >> _S32)
    return hi, a * b


def philox_blocks(counters, domain, k0, k1):
    """Vectorized Philox: one row of four words per counter value."""
    c0 = np.asarray(counters, dtype=np.uint64).copy()
    n = c0.shape[0]
    c1 = np.full(n, domain, dtype=np.uint64)
    c2 = np.zeros(n, dtype=np.uint64)
    c3 = np.zeros(n, dtype=np.uint64)
    k0 = np.full(n, k0, dtype=np.uint64)
    k1 = np.full(n, k1, dtype=np.uint64)
    m0 = np.full(n, _M0, dtype=np.uint64)
    m1 = np.full(n, _M1, dtype=np.uint64)
    for r in range(10):
        if r > 0:
            k0 = k0 + _W0
            k1 = k1 + _W1
        hi0, lo0 = _mulhilo_np(m0, c0)
        hi1, lo1 = _mulhilo_np(m1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return np.stack([c0, c1, c2, c3], axis=1)


def to_unit(words):
    """Raw words to doubles in [0, 1) (vectorized ``u01``)."""
    return (np.asarray(words, dtype=np.uint64) >> _S11).astype(np.float64) * _INV53


def stream_key(*parts):
    """Fold integers (possibly negative) into one 64-bit stream id via splitmix64."""
    h = 0x243F6A8885A308D3
    for p in parts:
        h = (h ^ (int(p) & MASK64)) & MASK64
        h = (h + 0x9E3779B97F4A7C15) & MASK64
        z = h
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        h = z ^ (z >> 31)
    return h


def stream_keys(*columns):
    """Vectorised ``stream_key`` over equal-length integer columns."""
    cols = [np.asarray(c).astype(np.int64).view(np.uint64) for c in columns]
    h = np.full(cols[0].shape, 0x243F6A8885A308D3, dtype=np.uint64)
    with np.errstate(over="ignore"):
        for c in cols:
            h = (h ^ c) + np.uint64(0x9E3779B97F4A7C15)
            z = (h ^ (h >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
            h = z ^ (z >> np.uint64(31))
    return h


@dataclass
class RngStream:
    """A position in one substream; ``counter`` counts consumed blocks."""

    seed: int
    stream_id: int = 0
    counter: int = 0
    domain: int = DOMAIN_STABLE

    def __post_init__(self):
        for name in ("seed", "stream_id", "counter"):
            v = int(getattr(self, name))
            if not 0 <= v <= MASK64:
                raise ValueError(f"{name} must fit in 64 unsigned bits, got {v}")
            setattr(self, name, v)

    def blocks(self, count):
        """Draw ``count`` blocks of four raw words and advance the counter."""
        ctr = np.arange(self.counter, self.counter + count, dtype=np.uint64)
        self.counter += count
        return philox_blocks(ctr, self.domain, self.seed, self.stream_id)

    def uniforms(self, size):
        """``size`` doubles in [0, 1)."""
        words = self.blocks(-(-size // 4)).ravel()[:size]
        return to_unit(words)

    def spawn(self, stream_id):
        """Independent stream under the same seed."""
        return RngStream(self.seed, stream_id, 0, self.domain)

    def copy(self):
        return RngStream(self.seed, self.stream_id, self.counter, self.domain)
