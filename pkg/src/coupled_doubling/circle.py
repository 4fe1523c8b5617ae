"""Arithmetic on the circle T = R/Z and the torus T^N.

All functions accept scalars or numpy arrays and broadcast.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def reduce(x):
    """Reduce ``x`` modulo 1 into ``[0, 1)``.

    Floating rounding can make ``x % 1.0`` return exactly 1.0 for tiny
    negative inputs; those are clamped back to 0.0.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("reduce: non-finite input")
    r = arr - np.floor(arr)
    r = np.where(r >= 1.0, 0.0, r) + 0.0  # + 0.0 drops negative zero
    if np.ndim(x) == 0:
        return float(r)
    return r


def signed_distance(u):
    """The coupling kernel g: the 1-periodic odd lift of u on (-1/2, 1/2).

    g(+-1/2) = 0 exactly.
    """
    arr = np.asarray(u, dtype=float)
    r = arr - np.floor(arr + 0.5)  # in [-1/2, 1/2)
    r = np.where(r == -0.5, 0.0, r) + 0.0
    if np.ndim(u) == 0:
        return float(r)
    return r


def ccw_arc(x, y):
    """Length of the counterclockwise arc from ``x`` to ``y``, in ``[0, 1)``."""
    arr = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    r = arr - np.floor(arr)
    r = np.where(r >= 1.0, 0.0, r) + 0.0
    if np.ndim(r) == 0:
        return float(r)
    return r


def torus_distance(x, y):
    """Shortest (unsigned) arc length between ``x`` and ``y``."""
    return np.abs(signed_distance(np.asarray(y, dtype=float) - np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class ArcInterval:
    """Closed counterclockwise arc ``{start + t : 0 <= t <= length}`` on T."""

    start: float
    length: float

    def __post_init__(self):
        if not np.isfinite(self.start) or not np.isfinite(self.length):
            raise ValueError("ArcInterval: non-finite field")
        if not 0.0 <= self.length <= 1.0:
            raise ValueError(f"ArcInterval: length {self.length} outside [0, 1]")
        object.__setattr__(self, "start", reduce(self.start))

    @property
    def end(self) -> float:
        return reduce(self.start + self.length)

    @property
    def midpoint(self) -> float:
        return reduce(self.start + 0.5 * self.length)

    def contains(self, p):
        """Membership test; a full-circle arc contains every point."""
        if self.length >= 1.0:
            return np.ones(np.shape(p), dtype=bool) if np.ndim(p) else True
        return ccw_arc(self.start, p) <= self.length

    def unwrap(self, p):
        """Coordinates of ``p`` in the chart ``[start, start + 1)`` where the arc is an interval."""
        return self.start + ccw_arc(self.start, p)
