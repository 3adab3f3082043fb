"""Aged paths: a cadlag trajectory together with its cadlag age.

Ages are stored through an *origin* function: ``age(t) = t - origin(t)``,
where ``origin`` is the earliest birth time among the walkers merged into
the path's cluster. It is a step function that only decreases, so the age
grows at rate one and jumps upward at coalescence with an older path. Two
records describing the same cluster therefore compute identical floats.
"""

import math
from dataclasses import dataclass, field

import numpy as np

_EMPTY = np.empty(0)


def _arr(x):
    return np.ascontiguousarray(x, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class AgedPath:
    birth: float
    x0: float
    jump_times: np.ndarray = field(default_factory=lambda: _EMPTY)
    jump_values: np.ndarray = field(default_factory=lambda: _EMPTY)
    origin0: float = None
    origin_times: np.ndarray = field(default_factory=lambda: _EMPTY)
    origins: np.ndarray = field(default_factory=lambda: _EMPTY)
    end: float = math.inf
    born_into: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "birth", float(self.birth))
        set_(self, "x0", float(self.x0))
        set_(self, "end", float(self.end))
        set_(self, "origin0", float(self.birth if self.origin0 is None else self.origin0))
        for name in ("jump_times", "jump_values", "origin_times", "origins"):
            set_(self, name, _arr(getattr(self, name)))
        if self.jump_times.shape != self.jump_values.shape:
            raise ValueError("jump_times and jump_values differ in length")
        if self.origin_times.shape != self.origins.shape:
            raise ValueError("origin_times and origins differ in length")

    # -- evaluation -------------------------------------------------------
    def value_at(self, t):
        k = np.searchsorted(self.jump_times, t, side="right")
        return self.x0 if k == 0 else float(self.jump_values[k - 1])

    def origin_at(self, t):
        k = np.searchsorted(self.origin_times, t, side="right")
        return self.origin0 if k == 0 else float(self.origins[k - 1])

    def age_at(self, t):
        return t - self.origin_at(t)

    @property
    def initial_age(self):
        return self.birth - self.origin0

    @property
    def age_jump_values(self):
        return self.origin_times - self.origins

    def check(self, tol=0.0):
        """Raise ``ValueError`` if the record breaks the aged-path invariants."""
        jt, ot = self.jump_times, self.origin_times
        if jt.size and (jt[0] <= self.birth or np.any(np.diff(jt) <= 0) or jt[-1] > self.end):
            raise ValueError("trajectory jump times must increase strictly inside (birth, end]")
        if ot.size and (ot[0] <= self.birth or np.any(np.diff(ot) <= 0) or ot[-1] > self.end):
            raise ValueError("age jump times must increase strictly inside (birth, end]")
        if self.origin0 > self.birth + tol:
            raise ValueError("age must be nonnegative")
        chain = np.concatenate([[self.origin0], self.origins])
        if np.any(np.diff(chain) >= 0):
            raise ValueError("age jumps must be strictly upward")

    # -- identity ---------------------------------------------------------
    def key(self):
        """Hashable value identity (ignores provenance metadata)."""
        return (self.birth, self.x0, self.end, self.origin0, self.born_into,
                self.jump_times.tobytes(), self.jump_values.tobytes(),
                self.origin_times.tobytes(), self.origins.tobytes())

    def __eq__(self, other):
        return isinstance(other, AgedPath) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def with_meta(self, **kw):
        meta = dict(self.meta)
        meta.update(kw)
        return AgedPath(self.birth, self.x0, self.jump_times, self.jump_values, self.origin0,
                        self.origin_times, self.origins, self.end, self.born_into, meta)


def canonical_order(path):
    return (path.birth, path.x0, path.meta.get("walker", -1), path.key())


@dataclass(frozen=True, eq=False)
class PathCollection:
    """A finite set of aged paths; duplicates (by value) are merged."""

    paths: tuple = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        uniq = {}
        for p in self.paths:
            uniq.setdefault(p.key(), p)
        object.__setattr__(self, "paths", tuple(sorted(uniq.values(), key=canonical_order)))

    def __len__(self):
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)

    def keys(self):
        return {p.key() for p in self.paths}

    def __eq__(self, other):
        return isinstance(other, PathCollection) and self.keys() == other.keys()

    def __hash__(self):
        return hash(frozenset(self.keys()))

    def issubset(self, other):
        return self.keys() <= other.keys()

    def issuperset(self, other):
        return self.keys() >= other.keys()
