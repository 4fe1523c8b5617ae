"""Histograms on the circle and distance-to-uniform statistics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class EmpiricalHistogram:
    """Counts over ``bin_count`` equal bins partitioning [0, 1)."""

    bin_count: int
    counts: np.ndarray = field(default=None)
    total: int = 0

    def __post_init__(self):
        if int(self.bin_count) != self.bin_count or self.bin_count < 1:
            raise ValueError(f"bin_count must be a positive integer, got {self.bin_count}")
        if self.counts is None:
            self.counts = np.zeros(self.bin_count, dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (self.bin_count,):
            raise ValueError("counts length does not match bin_count")
        if np.any(self.counts < 0):
            raise ValueError("negative counts")
        self.total = int(self.counts.sum())

    @classmethod
    def from_samples(cls, samples, bin_count: int) -> "EmpiricalHistogram":
        hist = cls(bin_count)
        hist.add(samples)
        return hist

    def add(self, samples) -> None:
        """Accumulate points of [0, 1) (any shape) into the bins."""
        s = np.asarray(samples, dtype=float).ravel()
        idx = np.floor(s * self.bin_count).astype(np.int64)
        np.clip(idx, 0, self.bin_count - 1, out=idx)
        self.counts += np.bincount(idx, minlength=self.bin_count)
        self.total += s.size

    def merge(self, other: "EmpiricalHistogram") -> "EmpiricalHistogram":
        if other.bin_count != self.bin_count:
            raise ValueError("cannot merge histograms with different bin counts")
        return EmpiricalHistogram(self.bin_count, self.counts + other.counts)

    __add__ = merge

    def probabilities(self) -> np.ndarray:
        if self.total == 0:
            raise ValueError("empty histogram")
        return self.counts / self.total

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.bin_count + 1) / self.bin_count

    def occupied(self) -> np.ndarray:
        return np.flatnonzero(self.counts)


def ks_distance_to_uniform(hist: EmpiricalHistogram) -> float:
    """Sup over bin boundaries of |empirical CDF - uniform CDF|."""
    if hist.total <= 0:
        raise ValueError("ks_distance_to_uniform: empty histogram")
    ecdf = np.cumsum(hist.counts) / hist.total
    ucdf = np.arange(1, hist.bin_count + 1) / hist.bin_count
    return float(np.max(np.abs(ecdf - ucdf)))


def l1_distance(p, q) -> float:
    return float(np.sum(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float))))
