"""Recover sliding super points from the hot estimators of an RSEA.

A candidate tuple holds one hot column per row, in row order. Column 0 XOR
column ``i`` gives address block ``B(i)``, and neighbouring blocks must agree
on their ``q - delta`` overlapping bits, so tuples are grown one row at a time
and pruned as soon as the newest pair of blocks disagrees.

Two growth orders are provided and must return the same hosts:

* :func:`reconstruct_recursive` walks depth first and needs one tuple of
  memory.
* :func:`reconstruct_leveled` grows all tuples of a level together into a
  ping-pong pair of buffers, dividing each level's work evenly over workers.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import CandidateOverflow
from .estimator import estimate, hot_cutoff
from .hashing import assemble_ip, assemble_ips, consistent_values, recover_block, rhfg_all
from .parallel import run_split
from .rsea import DetectionReport, HotSet, Rsea, dedupe

CandidateTuple = tuple  # column per row, rows 0 .. m-1

DEFAULT_BUFFER_CAP = 1 << 24
INITIAL_BUFFER = 1 << 16
_CHECK_CHUNK = 1 << 20


def finalize_candidate(rsea: Rsea, ct: Sequence[int], k: int, theta: int):
    """Turn a complete tuple into ``(cip, estimate)``, or ``None`` if it fails.

    The tuple's estimators are intersected with an element-wise max; the host
    must still look hot there, and hashing the rebuilt address must land on
    exactly the tuple's columns.
    """
    cfg = rsea.cfg
    if len(ct) != cfg.r:
        raise ValueError(f"candidate tuple needs {cfg.r} columns, got {len(ct)}")
    use = rsea.grid[np.arange(cfg.r), np.asarray(ct, dtype=np.intp)].max(axis=0)
    r_k = int(np.count_nonzero(use < k))
    if r_k < hot_cutoff(rsea.eta, theta):
        return None
    blocks = [recover_block(ct[0], ct[i], i) for i in range(1, cfg.r)]
    cip = assemble_ip(blocks, cfg)
    if rhfg_all(cip, cfg)[0].tolist() != [int(c) for c in ct]:
        return None
    return cip, estimate(rsea.eta, r_k)


def _finalize_many(rsea: Rsea, tuples: np.ndarray, k: int, cutoff: int):
    """Vectorised :func:`finalize_candidate`; returns (cips, estimates) of survivors."""
    cfg = rsea.cfg
    if tuples.shape[0] == 0:
        return np.empty(0, np.uint32), np.empty(0)
    blocks = tuples[:, :1] ^ tuples[:, 1:]
    cips = assemble_ips(blocks, cfg)
    ok = np.all(rhfg_all(cips, cfg) == tuples, axis=1)
    tuples, cips = tuples[ok], cips[ok]
    r_k = np.empty(tuples.shape[0], dtype=np.int64)
    rows = np.arange(cfg.r)[None, :]
    step = max(1, (1 << 22) // (cfg.r * rsea.eta))
    for lo in range(0, tuples.shape[0], step):
        use = rsea.grid[rows, tuples[lo:lo + step].astype(np.intp)].max(axis=1)
        r_k[lo:lo + step] = np.count_nonzero(use < k, axis=1)
    hot = r_k >= cutoff
    ests = np.array([estimate(rsea.eta, int(v)) for v in r_k[hot]])
    return cips[hot], ests


def reconstruct_recursive(rsea: Rsea, k: int, theta: int, slot: int = 0,
                          hot: list[HotSet] | None = None) -> DetectionReport:
    cfg = rsea.cfg
    hot = rsea.hot_sets(k, theta) if hot is None else hot
    cols = [h.columns for h in hot]
    found = []

    def grow(ct: list[int], i: int) -> None:
        # ct holds rows 0..i-1 and has passed every check so far
        if i == cfg.r:
            res = finalize_candidate(rsea, ct, k, theta)
            if res is not None:
                found.append(res)
            return
        prev = ct[0] ^ ct[i - 1]
        row = cols[i]
        for he in row[consistent_values(prev, ct[0] ^ row, cfg)].tolist():
            grow(ct + [he], i + 1)

    if all(c.size for c in cols[:3]):
        for he0 in cols[0].tolist():
            for he1 in cols[1].tolist():
                b1 = he0 ^ he1
                row2 = cols[2]
                for he2 in row2[consistent_values(b1, he0 ^ row2, cfg)].tolist():
                    grow([he0, he1, he2], 3)
    return dedupe(slot, found)


class CandidateBuffer:
    """Append-only tuple store that doubles its capacity up to a hard cap."""

    def __init__(self, cap: int = DEFAULT_BUFFER_CAP, initial: int = INITIAL_BUFFER):
        self.cap = cap
        self.initial = initial
        self._data = np.empty((0, 0), dtype=np.uint32)
        self.size = 0

    def reset(self, width: int) -> None:
        if self._data.shape[1] != width:
            self._data = np.empty((min(self.initial, self.cap), width), dtype=np.uint32)
        self.size = 0

    def extend(self, tuples: np.ndarray, level: int) -> None:
        need = self.size + tuples.shape[0]
        if need > self.cap:
            raise CandidateOverflow(level, need, self.cap)
        if need > self._data.shape[0]:
            capacity = max(self._data.shape[0], 1)
            while capacity < need:
                capacity *= 2
            grown = np.empty((min(capacity, self.cap), self._data.shape[1]), dtype=np.uint32)
            grown[:self.size] = self._data[:self.size]
            self._data = grown
        self._data[self.size:need] = tuples
        self.size = need

    @property
    def tuples(self) -> np.ndarray:
        return self._data[:self.size]


def reconstruct_leveled(rsea: Rsea, k: int, theta: int, workers: int = 1, slot: int = 0,
                        hot: list[HotSet] | None = None,
                        cap: int = DEFAULT_BUFFER_CAP) -> DetectionReport:
    cfg = rsea.cfg
    hot = rsea.hot_sets(k, theta) if hot is None else hot
    cols = [h.columns for h in hot]
    if any(c.size == 0 for c in cols):
        return DetectionReport(slot, [])

    buffers = (CandidateBuffer(cap), CandidateBuffer(cap))
    store = buffers[0]
    store.reset(3)
    h0, h1, h2 = cols[:3]
    shape = (h0.size, h1.size, h2.size)

    def first_level(rg: range) -> np.ndarray:
        parts = []
        for lo in range(rg.start, rg.stop, _CHECK_CHUNK):
            idx = np.arange(lo, min(lo + _CHECK_CHUNK, rg.stop))
            a, b, c = np.unravel_index(idx, shape)
            t = np.stack([h0[a], h1[b], h2[c]], axis=1)
            parts.append(t[consistent_values(t[:, 0] ^ t[:, 1], t[:, 0] ^ t[:, 2], cfg)])
        return np.concatenate(parts) if parts else np.empty((0, 3), np.uint32)

    for part in run_split(first_level, h0.size * h1.size * h2.size, workers):
        store.extend(part, level=2)

    for i in range(3, cfg.r):
        read, store = store, buffers[i % 2]
        store.reset(i + 1)
        prev = read.tuples
        row = cols[i]

        def extend_level(rg: range, prev=prev, row=row, i=i) -> np.ndarray:
            parts = []
            for lo in range(rg.start, rg.stop, _CHECK_CHUNK):
                idx = np.arange(lo, min(lo + _CHECK_CHUNK, rg.stop))
                t, h = prev[idx // row.size], row[idx % row.size]
                ok = consistent_values(t[:, 0] ^ t[:, i - 1], t[:, 0] ^ h, cfg)
                parts.append(np.column_stack([t[ok], h[ok]]))
            return np.concatenate(parts) if parts else np.empty((0, i + 1), np.uint32)

        for part in run_split(extend_level, prev.shape[0] * row.size, workers):
            store.extend(part, level=i)

    complete = store.tuples
    cutoff = hot_cutoff(rsea.eta, theta)
    results = run_split(lambda rg: _finalize_many(rsea, complete[rg.start:rg.stop], k, cutoff),
                        complete.shape[0], workers)
    found = [(c, e) for cips, ests in results for c, e in zip(cips.tolist(), ests.tolist())]
    return dedupe(slot, found)


def reconstruct(rsea: Rsea, k: int, theta: int, strategy: str = "leveled", workers: int = 1,
                slot: int = 0, cap: int = DEFAULT_BUFFER_CAP) -> DetectionReport:
    if strategy == "leveled":
        return reconstruct_leveled(rsea, k, theta, workers, slot, cap=cap)
    if strategy == "recursive":
        return reconstruct_recursive(rsea, k, theta, slot)
    raise ValueError(f"unknown reconstruction strategy {strategy!r}")
