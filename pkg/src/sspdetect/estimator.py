"""Sliding estimator: linear counting generalised to a trailing window.

A linear-counting bitmap only knows whether a bucket was hit. Here each bucket
holds a 16-bit *distance recorder* instead: how many slots ago the bucket was
last hit, saturating at 65535 ("not seen within the horizon"). Counting the
recorders below ``k`` gives the number of buckets hit during the last ``k``
slots, which plugs straight into the linear-counting estimate.

The per-slot cycle is: touch during the scan, count/detect at slot end, then
:meth:`SlidingEstimator.advance` before the next slot's scan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .hashing import MAX_RECORDER, MAX_WINDOW

RECORDER_DTYPE = np.uint16


def saturating_increment(recorders: np.ndarray) -> None:
    """Add one to every recorder below 65535, in place."""
    np.add(recorders, 1, out=recorders, where=recorders < MAX_RECORDER)


def check_window(k: int) -> None:
    if not 1 <= k <= MAX_WINDOW:
        raise ValueError(f"k must be in [1, {MAX_WINDOW}], got {k}")


class SlidingEstimator:
    """Array of ``eta`` distance recorders.

    ``recorders`` may be a view into a larger grid; all mutation is in place.
    """

    __slots__ = ("recorders",)

    def __init__(self, eta: int | None = None, recorders: np.ndarray | None = None):
        if recorders is None:
            if eta is None or eta < 2:
                raise ValueError(f"eta must be at least 2, got {eta}")
            recorders = np.full(eta, MAX_RECORDER, dtype=RECORDER_DTYPE)
        elif recorders.dtype != RECORDER_DTYPE or recorders.ndim != 1:
            raise ValueError("recorders must be a 1-D uint16 array")
        self.recorders = recorders

    @property
    def eta(self) -> int:
        return self.recorders.shape[0]

    def touch(self, bucket: int) -> None:
        if not 0 <= bucket < self.eta:
            raise IndexError(f"bucket {bucket} outside [0, {self.eta})")
        self.recorders[bucket] = 0

    def advance(self) -> None:
        saturating_increment(self.recorders)

    def active_count(self, k: int) -> int:
        """``R_k``: recorders hit within the last ``k`` slots."""
        check_window(k)
        return int(np.count_nonzero(self.recorders < k))

    def estimate(self, k: int) -> float:
        return estimate(self.eta, self.active_count(k))

    def copy(self) -> SlidingEstimator:
        return SlidingEstimator(recorders=self.recorders.copy())

    def __eq__(self, other):
        if not isinstance(other, SlidingEstimator):
            return NotImplemented
        return np.array_equal(self.recorders, other.recorders)

    def __repr__(self):
        return f"SlidingEstimator(eta={self.eta})"


@dataclass(frozen=True)
class WindowConfig:
    """Slot grid: slot ``i`` covers ``[start + i*mu, start + (i+1)*mu)``."""

    mu: float = 1.0
    k: int = 300
    start: float = 0.0

    def __post_init__(self):
        check_window(self.k)
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")

    def slot_of(self, ts):
        """Slot index of a timestamp (scalar or array); negative before ``start``."""
        return np.floor((np.asarray(ts, dtype=np.float64) - self.start) / self.mu).astype(np.int64)


@dataclass(frozen=True)
class DetectorParams:
    theta: int
    eta: int

    @property
    def hot_cutoff(self) -> int:
        return hot_cutoff(self.eta, self.theta)


def new_estimator(eta: int) -> SlidingEstimator:
    return SlidingEstimator(eta)


def estimate(eta: int, r_k: int) -> float:
    """Linear-counting estimate from ``r_k`` active recorders out of ``eta``.

    A fully saturated estimator has no zero cells, which makes the log blow up;
    it reports the ``z0 = 1`` value ``eta * ln(eta)`` instead.
    """
    if not 0 <= r_k <= eta:
        raise ValueError(f"r_k must be in [0, {eta}], got {r_k}")
    z0 = eta - r_k
    if z0 == 0:
        return eta * math.log(eta)
    return -eta * math.log(z0 / eta)


def hot_cutoff(eta: int, theta: float) -> int:
    """Smallest ``R_k`` whose estimate reaches ``theta``, rounded up to an int."""
    if theta < 1:
        raise ValueError(f"theta must be at least 1, got {theta}")
    return math.ceil(eta * (1.0 - math.exp(-theta / eta)))


def _stack(estimators: Iterable[SlidingEstimator]) -> np.ndarray:
    ests = list(estimators)
    if not ests:
        raise ValueError("need at least one estimator")
    etas = {e.eta for e in ests}
    if len(etas) != 1:
        raise ValueError(f"mismatched eta values: {sorted(etas)}")
    return np.stack([e.recorders for e in ests])


def merge_min(estimators: Iterable[SlidingEstimator]) -> SlidingEstimator:
    """Union of observations: each recorder keeps its most recent hit anywhere."""
    return SlidingEstimator(recorders=_stack(estimators).min(axis=0))


def intersect_max(estimators: Iterable[SlidingEstimator]) -> SlidingEstimator:
    """Element-wise max; a bucket stays active only if active in every input."""
    return SlidingEstimator(recorders=_stack(estimators).max(axis=0))
