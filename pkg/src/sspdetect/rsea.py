"""Reversible sliding estimator array (RSEA).

The grid is one ``uint16`` array of shape ``(r, 2**q, eta)``: row, column,
recorder. Each inside host owns one column per row, picked by the reversible
hash group; each IP pair zeroes the same recorder (picked by ``H1(oip)``) in
all r of those estimators.

Phases: ``update``/``scan_batch`` may run concurrently with each other (they
only ever store zero). Everything else needs the scan to be finished.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError
from .estimator import RECORDER_DTYPE, SlidingEstimator, check_window, hot_cutoff, saturating_increment
from .hashing import MAX_RECORDER, RhfgConfig, config_problems, hash_seeds, rhfg
from .parallel import run_split

DEFAULT_ALPHA = 1 << 15
# recorders touched per inner step of a big grid pass; bounds temporaries
_CHUNK = 1 << 22


class HotSet(NamedTuple):
    row: int
    columns: np.ndarray  # sorted uint32 column indices


class Rsea:
    """``r x 2**q`` grid of sliding estimators addressed by the reversible hash group.

    Args:
        cfg: hash group shape and seed.
        eta: recorders per estimator.
        alpha: largest batch accepted by :meth:`scan_batch`.
        grid: optional existing ``(r, 2**q, eta)`` uint16 array to adopt.
    """

    def __init__(self, cfg: RhfgConfig, eta: int, alpha: int = DEFAULT_ALPHA,
                 grid: np.ndarray | None = None):
        problems = config_problems(cfg, eta)
        if problems:
            raise ConfigError(problems)
        self.cfg = cfg
        self.eta = eta
        self.alpha = alpha
        self.seeds = hash_seeds(cfg.seed)
        shape = (cfg.r, cfg.columns, eta)
        if grid is None:
            grid = np.full(shape, MAX_RECORDER, dtype=RECORDER_DTYPE)
        elif grid.shape != shape or grid.dtype != RECORDER_DTYPE:
            raise ValueError(f"grid must be uint16 with shape {shape}, got {grid.dtype} {grid.shape}")
        self.grid = grid

    @property
    def recorder_count(self) -> int:
        return self.grid.size

    def estimator(self, row: int, col: int) -> SlidingEstimator:
        """Live view of one estimator; writes go through to the grid."""
        return SlidingEstimator(recorders=self.grid[row, col])

    def copy(self) -> Rsea:
        return Rsea(self.cfg, self.eta, self.alpha, self.grid.copy())

    def compatible_with(self, other: Rsea) -> bool:
        a, b = self.cfg, other.cfg
        return (a.seed, a.q, a.r, a.delta, self.eta) == (b.seed, b.q, b.r, b.delta, other.eta)

    def __eq__(self, other):
        if not isinstance(other, Rsea):
            return NotImplemented
        return self.compatible_with(other) and np.array_equal(self.grid, other.grid)

    # -- scan phase -------------------------------------------------------

    def update(self, cip: int, oip: int) -> None:
        """Record one oriented IP pair: r recorder writes."""
        bucket = self.seeds.opposite(oip, self.eta)
        col0 = self.seeds.row0(cip, self.cfg.q)
        for i in range(self.cfg.r):
            self.grid[i, rhfg(i, cip, self.cfg, col0=col0), bucket] = 0

    def _scan(self, cips: np.ndarray, oips: np.ndarray) -> None:
        if cips.size == 0:
            return
        buckets = self.seeds.opposite(oips, self.eta)
        col0 = self.seeds.row0(cips, self.cfg.q)
        for i in range(self.cfg.r):
            self.grid[i, rhfg(i, cips, self.cfg, col0=col0), buckets] = 0

    def scan_batch(self, cips, oips, workers: int = 1) -> None:
        """Apply a batch of at most ``alpha`` pairs, split across ``workers``.

        Only zeroes are written, so the result does not depend on order or on
        how the batch is divided.
        """
        cips = np.asarray(cips, dtype=np.uint32).ravel()
        oips = np.asarray(oips, dtype=np.uint32).ravel()
        if cips.shape != oips.shape:
            raise ValueError("cips and oips must have equal length")
        if cips.size > self.alpha:
            raise ValueError(f"batch of {cips.size} pairs exceeds alpha={self.alpha}")
        run_split(lambda rg: self._scan(cips[rg.start:rg.stop], oips[rg.start:rg.stop]),
                  cips.size, workers)

    def scan(self, cips, oips, workers: int = 1) -> None:
        """Feed any number of pairs through :meth:`scan_batch` in alpha-sized batches."""
        cips = np.asarray(cips, dtype=np.uint32).ravel()
        oips = np.asarray(oips, dtype=np.uint32).ravel()
        for lo in range(0, cips.size, self.alpha):
            self.scan_batch(cips[lo:lo + self.alpha], oips[lo:lo + self.alpha], workers)

    # -- quiescent phase --------------------------------------------------

    def advance_slot(self, workers: int = 1) -> None:
        """Age every recorder by one slot; the flat grid is split evenly by worker."""
        flat = self.grid.reshape(-1)

        def work(rg: range) -> None:
            for lo in range(rg.start, rg.stop, _CHUNK):
                saturating_increment(flat[lo:min(lo + _CHUNK, rg.stop)])

        run_split(work, flat.size, workers)

    def active_counts(self, k: int) -> np.ndarray:
        """``R_k`` of every estimator, shape ``(r, 2**q)``."""
        check_window(k)
        out = np.empty((self.cfg.r, self.cfg.columns), dtype=np.int64)
        step = max(1, _CHUNK // self.eta)
        for i in range(self.cfg.r):
            for lo in range(0, self.cfg.columns, step):
                out[i, lo:lo + step] = np.count_nonzero(self.grid[i, lo:lo + step] < k, axis=1)
        return out

    def hot_sets(self, k: int, theta: int) -> list[HotSet]:
        cutoff = hot_cutoff(self.eta, theta)
        counts = self.active_counts(k)
        return [HotSet(i, np.flatnonzero(counts[i] >= cutoff).astype(np.uint32))
                for i in range(self.cfg.r)]


@dataclass
class DetectionReport:
    """Hosts reported for one slot, sorted by address, one entry per host."""

    slot: int
    entries: list[tuple[int, float]]

    @property
    def cips(self) -> set[int]:
        return {cip for cip, _ in self.entries}

    def __len__(self):
        return len(self.entries)


def dedupe(slot: int, found) -> DetectionReport:
    """Collapse ``(cip, estimate)`` pairs to one per host, keeping the larger estimate."""
    best: dict[int, float] = {}
    for cip, est in found:
        cip = int(cip)
        if cip not in best or est > best[cip]:
            best[cip] = float(est)
    return DetectionReport(slot, sorted(best.items()))
