"""Per-node grids, the snapshot wire format, and merging into a global grid.

Snapshot layout (all integers little-endian)::

    offset  size  field
    0       4     magic b"RSEA"
    4       4     format version (1)
    8       8     hash seed
    16      4     q
    20      4     r
    24      4     delta
    28      4     eta
    32      4     k
    36      4     theta
    40      4     slot index
    44      4     node id
    48      ...   recorders, uint16, row-major (row, column, bucket)
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import SnapshotError
from .estimator import RECORDER_DTYPE, WindowConfig
from .hashing import RhfgConfig
from .parallel import run_split
from .reconstruct import DEFAULT_BUFFER_CAP, reconstruct
from .rsea import DEFAULT_ALPHA, DetectionReport, Rsea
from .workload import Trace, slot_indices

SNAPSHOT_MAGIC = b"RSEA"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIQIIIIIIII")
HEADER_SIZE = _HEADER.size

MERGE_POLICIES = ("min", "paper-max")


@dataclass(frozen=True)
class SnapshotMeta:
    seed: int
    q: int
    r: int
    delta: int
    eta: int
    k: int = 0
    theta: int = 0
    slot: int = 0
    node: int = 0

    @classmethod
    def for_rsea(cls, rsea: Rsea, k: int = 0, theta: int = 0, slot: int = 0, node: int = 0):
        c = rsea.cfg
        return cls(c.seed, c.q, c.r, c.delta, rsea.eta, k, theta, slot, node)

    @property
    def cfg(self) -> RhfgConfig:
        return RhfgConfig(self.q, self.r, self.delta, self.seed)


def payload_size(cfg: RhfgConfig, eta: int) -> int:
    """Bytes of recorder payload: two per recorder."""
    return 2 * eta * cfg.r * cfg.columns


def export_snapshot(rsea: Rsea, meta: SnapshotMeta | None = None) -> bytes:
    meta = meta or SnapshotMeta.for_rsea(rsea)
    if (meta.seed, meta.q, meta.r, meta.delta, meta.eta) != (
            rsea.cfg.seed, rsea.cfg.q, rsea.cfg.r, rsea.cfg.delta, rsea.eta):
        raise SnapshotError("snapshot metadata does not describe this grid")
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, meta.seed, meta.q, meta.r, meta.delta,
                          meta.eta, meta.k, meta.theta, meta.slot, meta.node)
    return header + rsea.grid.astype("<u2", copy=False).tobytes()


def write_snapshot(rsea: Rsea, dest, meta: SnapshotMeta | None = None) -> None:
    data = export_snapshot(rsea, meta)
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "wb") as fh:
            fh.write(data)
    else:
        dest.write(data)


def import_snapshot(data, expected: SnapshotMeta | None = None,
                    alpha: int = DEFAULT_ALPHA) -> tuple[Rsea, SnapshotMeta]:
    """Decode a snapshot produced by :func:`export_snapshot`.

    ``data`` may be bytes, a path, or a binary file object. When ``expected``
    is given, its seed and grid shape must match.

    Raises:
        SnapshotError: bad magic, unknown version, wrong payload length, or a
            parameter mismatch against ``expected``.
    """
    if isinstance(data, (str, os.PathLike)):
        with open(data, "rb") as fh:
            data = fh.read()
    elif not isinstance(data, (bytes, bytearray, memoryview)):
        data = data.read()
    if len(data) < HEADER_SIZE:
        raise SnapshotError(f"snapshot header truncated: {len(data)} of {HEADER_SIZE} bytes")
    magic, version, *fields = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotError(f"bad snapshot magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    meta = SnapshotMeta(*fields)
    if expected is not None:
        _check_compatible([expected, meta])
    try:
        cfg = meta.cfg
        want = payload_size(cfg, meta.eta)
    except (ValueError, OverflowError) as exc:
        raise SnapshotError(f"bad snapshot parameters: {exc}") from None
    got = len(data) - HEADER_SIZE
    if got != want:
        raise SnapshotError(f"snapshot payload is {got} bytes, expected {want}")
    grid = np.frombuffer(data, dtype="<u2", offset=HEADER_SIZE).astype(RECORDER_DTYPE)
    try:
        rsea = Rsea(cfg, meta.eta, alpha, grid.reshape(cfg.r, cfg.columns, meta.eta))
    except ValueError as exc:
        raise SnapshotError(f"bad snapshot parameters: {exc}") from None
    return rsea, meta


def _check_compatible(metas: Sequence[SnapshotMeta]) -> None:
    first = metas[0]
    for other in metas[1:]:
        for name in ("seed", "q", "r", "delta", "eta"):
            a, b = getattr(first, name), getattr(other, name)
            if a != b:
                if name == "seed":
                    a, b = f"{a:#018x}", f"{b:#018x}"
                raise SnapshotError(f"incompatible snapshots: {name} {a} vs {b}")


def merge_rseas(rseas: Sequence[Rsea], policy: str = "min", workers: int = 1) -> Rsea:
    """Combine per-node grids cell by cell into the global grid.

    ``"min"`` keeps each recorder's most recent hit on any node, which is the
    grid of the combined stream. ``"paper-max"`` takes the element-wise max
    instead, the same operator used to intersect a host's own estimators.
    """
    if not rseas:
        raise ValueError("need at least one grid to merge")
    if policy not in MERGE_POLICIES:
        raise ValueError(f"unknown merge policy {policy!r}")
    _check_compatible([SnapshotMeta.for_rsea(x) for x in rseas])
    out = rseas[0].copy()
    if len(rseas) == 1:
        return out
    op = np.minimum if policy == "min" else np.maximum
    flat = out.grid.reshape(-1)
    others = [x.grid.reshape(-1) for x in rseas[1:]]

    def work(rg: range) -> None:
        for other in others:
            op(flat[rg.start:rg.stop], other[rg.start:rg.stop], out=flat[rg.start:rg.stop])

    run_split(work, flat.size, workers)
    return out


@dataclass
class SlotResult:
    slot: int
    report: DetectionReport
    grid: Rsea  # the global grid, valid until the generator resumes


def simulate_nodes(shards: Sequence[Trace], cfg: RhfgConfig, eta: int, window: WindowConfig,
                   theta: int, *, policy: str = "min", strategy: str = "leveled",
                   workers: int = 1, alpha: int = DEFAULT_ALPHA, n_slots: int | None = None,
                   cap: int = DEFAULT_BUFFER_CAP) -> Iterator[SlotResult]:
    """Run the slot cycle over ``n`` nodes and yield one result per slot.

    Per slot: each node scans its own pairs, the node grids are merged (only
    when ``n > 1``), super points are reconstructed from the global grid, and
    finally each node grid is aged by one slot.
    """
    if not shards:
        raise ValueError("need at least one trace shard")
    for t in shards:
        t.check_order()
    nodes = [Rsea(cfg, eta, alpha) for _ in shards]
    slot_idx = [slot_indices(t, window) for t in shards]
    if n_slots is None:
        n_slots = max((int(s.max()) + 1 for s in slot_idx if s.size), default=0)
    bounds = [np.searchsorted(s, np.arange(n_slots + 1)) for s in slot_idx]
    for slot in range(n_slots):
        for node, trace, b in zip(nodes, shards, bounds):
            lo, hi = b[slot], b[slot + 1]
            node.scan(trace.cip[lo:hi], trace.oip[lo:hi], workers)
        grsea = nodes[0] if len(nodes) == 1 else merge_rseas(nodes, policy, workers)
        report = reconstruct(grsea, window.k, theta, strategy, workers, slot, cap)
        yield SlotResult(slot, report, grsea)
        for node in nodes:
            node.advance_slot(workers)
