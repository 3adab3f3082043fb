"""Operators on aged paths: age filtering, rectangle restriction, projection."""

import math
from dataclasses import dataclass

import numpy as np

from .paths import AgedPath, PathCollection

AGE_TOL = 1e-12


@dataclass(frozen=True)
class Rectangle:
    """Time interval [S, T] crossed with space interval [A, B]."""

    S: float
    T: float
    A: float
    B: float

    def __post_init__(self):
        if not (self.S < self.T and self.A < self.B):
            raise ValueError(f"degenerate rectangle {self}")

    @classmethod
    def square(cls, N):
        return cls(-float(N), float(N), -float(N), float(N))


def _age_threshold_time(path, delta, tol):
    """Time A at which the path's age first reaches ``delta`` continuously.

    Returns ``(A, piece)`` or ``None`` when the path is suppressed (its age
    jumps onto or past ``delta``) or never gets that old.
    """
    ot, org = path.origin_times, path.origins
    if path.initial_age >= delta - tol:
        if path.born_into:
            return None
        return path.birth, -1
    for k in range(ot.size + 1):
        o = path.origin0 if k == 0 else org[k - 1]
        if k > 0 and ot[k - 1] - o >= delta - tol:
            return None
        a = o + delta
        nxt = ot[k] if k < ot.size else math.inf
        if a < nxt:
            return (a, k) if a <= path.end else None
    return None


def filter_age(collection, delta, tol=AGE_TOL):
    """Keep each path from the moment its age reaches ``delta``.

    Paths whose age reaches ``delta`` through a coalescence jump are dropped:
    the older path they joined already represents those points.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    out = []
    for p in collection:
        hit = _age_threshold_time(p, delta, tol)
        if hit is None:
            continue
        a, _ = hit
        out.append(p if a == p.birth else _tail(p, a, False))
    return PathCollection(tuple(out), dict(collection.metadata, delta=delta))


def _tail(p, start, born_into):
    j = np.searchsorted(p.jump_times, start, side="right")
    k = np.searchsorted(p.origin_times, start, side="right")
    return AgedPath(start, p.value_at(start), p.jump_times[j:], p.jump_values[j:],
                    p.origin_at(start), p.origin_times[k:], p.origins[k:], p.end,
                    born_into, p.meta)


def entry_time(path, rect):
    """First time after ``birth v S`` the trajectory sits in [A, B] (inf if never)."""
    t0 = max(path.birth, rect.S)
    if t0 > path.end:
        return math.inf
    if rect.A <= path.value_at(t0) <= rect.B:
        return t0
    jt, jv = path.jump_times, path.jump_values
    k = np.searchsorted(jt, t0, side="right")
    inside = np.flatnonzero((jv[k:] >= rect.A) & (jv[k:] <= rect.B))
    if inside.size == 0:
        return math.inf
    t = float(jt[k + inside[0]])
    return t if t <= path.end else math.inf


def restrict(path, rect):
    """Restriction to ``rect``: trajectory clamped to [A, B] from the entry time to T.

    The age keeps its values and only loses the part of its domain outside
    [entry, T]. Returns ``None`` for the empty path.
    """
    if path.birth > rect.T:
        return None
    e = entry_time(path, rect)
    if not e < rect.T:
        return None
    end = min(rect.T, path.end)
    jt, jv = path.jump_times, path.jump_values
    lo = np.searchsorted(jt, e, side="right")
    hi = np.searchsorted(jt, end, side="right")
    x0 = min(max(path.value_at(e), rect.A), rect.B)
    vals = np.clip(jv[lo:hi], rect.A, rect.B)
    prev = np.concatenate([[x0], vals[:-1]])
    keep = vals != prev
    ot = path.origin_times
    klo = np.searchsorted(ot, e, side="right")
    khi = np.searchsorted(ot, end, side="right")
    return AgedPath(e, x0, jt[lo:hi][keep], vals[keep], path.origin_at(e),
                    ot[klo:khi], path.origins[klo:khi], end,
                    path.born_into and e == path.birth, path.meta)


def restrict_all(collection, rect):
    """``restrict`` over a collection; returns (collection, number of empty results)."""
    out = [restrict(p, rect) for p in collection]
    kept = tuple(q for q in out if q is not None)
    return PathCollection(kept, dict(collection.metadata)), len(out) - len(kept)


def project(collection, N, tol=AGE_TOL):
    """Filter at age 2^-N, then restrict to the square [-N, N]^2."""
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    filtered = filter_age(collection, 2.0 ** -N, tol)
    out, _ = restrict_all(filtered, Rectangle.square(N))
    return out


def translate(collection, dt=0.0, dx=0.0):
    """Shift every path by ``dt`` in time and ``dx`` in space."""
    out = []
    for p in collection:
        out.append(AgedPath(p.birth + dt, p.x0 + dx, p.jump_times + dt, p.jump_values + dx,
                            p.origin0 + dt, p.origin_times + dt, p.origins + dt, p.end + dt,
                            p.born_into, p.meta))
    return PathCollection(tuple(out), dict(collection.metadata))
