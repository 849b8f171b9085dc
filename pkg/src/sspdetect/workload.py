"""Traces, synthetic workloads with planted ground truth, the exact oracle and metrics.

Trace formats
-------------
binary
    8-byte header (``b"SSPT"`` + little-endian uint32 version 1) followed by
    12-byte little-endian records ``(ts, cip, oip)``, all uint32.
text
    one ``ts,cip,oip`` line per record; addresses as dotted quads or decimal
    integers. Blank lines and ``#`` comments are skipped.

Ground truth is written as ``slot,cip,count`` lines.
"""

from __future__ import annotations

import configparser
import io
import ipaddress
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import TraceError
from .estimator import WindowConfig

TRACE_MAGIC = b"SSPT"
TRACE_VERSION = 1
_HEADER = np.dtype([("magic", "S4"), ("version", "<u4")])
_RECORD = np.dtype([("ts", "<u4"), ("cip", "<u4"), ("oip", "<u4")])


def parse_ip(text: str) -> int:
    text = text.strip()
    try:
        if "." in text:
            return int(ipaddress.IPv4Address(text))
        value = int(text)
    except ValueError:
        raise ValueError(f"bad IPv4 address {text!r}") from None
    if not 0 <= value < 1 << 32:
        raise ValueError(f"address {value} outside 32 bits")
    return value


def format_ip(value: int) -> str:
    return str(ipaddress.IPv4Address(int(value)))


class TraceRecord(NamedTuple):
    ts: int
    cip: int
    oip: int


class Trace:
    """Column-oriented trace; iterating yields :class:`TraceRecord` values."""

    def __init__(self, ts=(), cip=(), oip=()):
        self.ts = np.asarray(ts, dtype=np.uint32).ravel()
        self.cip = np.asarray(cip, dtype=np.uint32).ravel()
        self.oip = np.asarray(oip, dtype=np.uint32).ravel()
        if not self.ts.size == self.cip.size == self.oip.size:
            raise ValueError("trace columns differ in length")

    @classmethod
    def from_records(cls, records: Iterable[Sequence[int]]) -> Trace:
        rows = list(records)
        if not rows:
            return cls()
        ts, cip, oip = zip(*rows)
        return cls(ts, cip, oip)

    @classmethod
    def concat(cls, traces: Sequence[Trace]) -> Trace:
        """Merge traces, stably ordered by timestamp."""
        if not traces:
            return cls()
        ts = np.concatenate([t.ts for t in traces])
        order = np.argsort(ts, kind="stable")
        return cls(ts[order], np.concatenate([t.cip for t in traces])[order],
                   np.concatenate([t.oip for t in traces])[order])

    def take(self, idx) -> Trace:
        return Trace(self.ts[idx], self.cip[idx], self.oip[idx])

    def __len__(self):
        return self.ts.size

    def __iter__(self) -> Iterator[TraceRecord]:
        for ts, cip, oip in zip(self.ts.tolist(), self.cip.tolist(), self.oip.tolist()):
            yield TraceRecord(ts, cip, oip)

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return (np.array_equal(self.ts, other.ts) and np.array_equal(self.cip, other.cip)
                and np.array_equal(self.oip, other.oip))

    def check_order(self) -> None:
        if self.ts.size > 1:
            bad = np.flatnonzero(self.ts[1:] < self.ts[:-1])
            if bad.size:
                i = int(bad[0]) + 1
                raise TraceError(f"timestamp regression at record {i}: "
                                 f"{int(self.ts[i])} < {int(self.ts[i - 1])}")


def _read_bytes(source) -> bytes:
    if isinstance(source, (bytes, bytearray, memoryview)):
        return bytes(source)
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return fh.read()
    data = source.read()
    return data.encode() if isinstance(data, str) else data


def read_trace(source, format: str = "auto") -> Trace:
    """Load a trace from a path, a binary file object, or raw bytes.

    ``format`` is ``"binary"``, ``"text"``, or ``"auto"`` (sniff the magic).

    Raises:
        TraceError: malformed record (with its position) or timestamps going
            backwards.
    """
    data = _read_bytes(source)
    if format == "auto":
        format = "binary" if data[:4] == TRACE_MAGIC else "text"
    if format == "binary":
        trace = _decode_binary(data)
    elif format == "text":
        trace = _decode_text(data.decode("utf-8", errors="replace"))
    else:
        raise ValueError(f"unknown trace format {format!r}")
    trace.check_order()
    return trace


def _decode_binary(data: bytes) -> Trace:
    if len(data) == 0:
        return Trace()
    if len(data) < _HEADER.itemsize:
        raise TraceError(f"binary trace header truncated ({len(data)} bytes)")
    header = np.frombuffer(data, _HEADER, count=1)[0]
    if header["magic"] != TRACE_MAGIC:
        raise TraceError(f"bad trace magic {bytes(header['magic'])!r}")
    if header["version"] != TRACE_VERSION:
        raise TraceError(f"unsupported trace version {int(header['version'])}")
    body = len(data) - _HEADER.itemsize
    if body % _RECORD.itemsize:
        n = body // _RECORD.itemsize
        raise TraceError(f"truncated record {n} at byte offset "
                         f"{_HEADER.itemsize + n * _RECORD.itemsize}")
    recs = np.frombuffer(data, _RECORD, offset=_HEADER.itemsize)
    return Trace(recs["ts"], recs["cip"], recs["oip"])


def _decode_text(text: str) -> Trace:
    ts, cip, oip = [], [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(",")
        try:
            if len(fields) != 3:
                raise ValueError(f"expected 3 fields, got {len(fields)}")
            t = int(fields[0])
            if not 0 <= t < 1 << 32:
                raise ValueError(f"timestamp {t} outside 32 bits")
            ts.append(t)
            cip.append(parse_ip(fields[1]))
            oip.append(parse_ip(fields[2]))
        except ValueError as exc:
            raise TraceError(f"line {lineno}: {exc}") from None
    return Trace(ts, cip, oip)


def encode_trace(trace: Trace, format: str = "binary") -> bytes:
    if format == "binary":
        recs = np.empty(len(trace), _RECORD)
        recs["ts"], recs["cip"], recs["oip"] = trace.ts, trace.cip, trace.oip
        header = np.array([(TRACE_MAGIC, TRACE_VERSION)], _HEADER)
        return header.tobytes() + recs.tobytes()
    if format == "text":
        out = io.StringIO()
        for rec in trace:
            out.write(f"{rec.ts},{format_ip(rec.cip)},{format_ip(rec.oip)}\n")
        return out.getvalue().encode()
    raise ValueError(f"unknown trace format {format!r}")


def write_trace(trace: Trace, dest, format: str = "binary") -> None:
    data = encode_trace(trace, format)
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "wb") as fh:
            fh.write(data)
    else:
        dest.write(data)


# -- orientation ---------------------------------------------------------


@dataclass(frozen=True)
class CnetSpec:
    """CIDR prefixes making up the monitored core network."""

    prefixes: tuple

    def __init__(self, prefixes: Iterable[str]):
        nets = tuple(ipaddress.IPv4Network(p, strict=True) for p in prefixes)
        if not nets:
            raise ValueError("CNet needs at least one prefix")
        object.__setattr__(self, "prefixes", nets)

    def contains(self, addr):
        """Membership for a single address or a uint32 array."""
        if isinstance(addr, (int, np.integer)):
            return any((int(addr) & int(n.netmask)) == int(n.network_address)
                       for n in self.prefixes)
        addr = np.asarray(addr, dtype=np.uint32)
        inside = np.zeros(addr.shape, dtype=bool)
        for n in self.prefixes:
            inside |= (addr & np.uint32(int(n.netmask))) == np.uint32(int(n.network_address))
        return inside


def orient_pairs(src: int, dst: int, cnet: CnetSpec):
    """``(cip, oip)`` for a packet crossing the CNet edge, else ``None``."""
    src_in, dst_in = cnet.contains(src), cnet.contains(dst)
    if src_in and not dst_in:
        return src, dst
    if dst_in and not src_in:
        return dst, src
    return None


def orient_trace(trace: Trace, cnet: CnetSpec) -> Trace:
    """Vectorised :func:`orient_pairs` over a trace of raw ``(src, dst)`` records."""
    src_in, dst_in = cnet.contains(trace.cip), cnet.contains(trace.oip)
    keep = src_in != dst_in
    flip = dst_in & ~src_in
    cip = np.where(flip, trace.oip, trace.cip)
    oip = np.where(flip, trace.cip, trace.oip)
    return Trace(trace.ts[keep], cip[keep], oip[keep])


# -- ground truth --------------------------------------------------------


class GroundTruth:
    """Exact opposite numbers per slot over the trailing ``k``-slot window.

    Stored as three parallel arrays sorted by ``(slot, cip)``.
    """

    def __init__(self, slots, cips, counts, n_slots: int, k: int):
        self.slots = np.asarray(slots, dtype=np.int64)
        self.cips = np.asarray(cips, dtype=np.uint32)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.n_slots = n_slots
        self.k = k
        order = np.lexsort((self.cips, self.slots))
        self.slots, self.cips, self.counts = self.slots[order], self.cips[order], self.counts[order]

    def _span(self, slot: int) -> slice:
        lo, hi = np.searchsorted(self.slots, [slot, slot + 1])
        return slice(int(lo), int(hi))

    def at(self, slot: int) -> dict[int, int]:
        s = self._span(slot)
        return dict(zip(self.cips[s].tolist(), self.counts[s].tolist()))

    def supers(self, slot: int, theta: int) -> set[int]:
        s = self._span(slot)
        return set(self.cips[s][self.counts[s] >= theta].tolist())

    def filtered(self, min_count: int) -> GroundTruth:
        keep = self.counts >= min_count
        return GroundTruth(self.slots[keep], self.cips[keep], self.counts[keep], self.n_slots, self.k)

    def __eq__(self, other):
        if not isinstance(other, GroundTruth):
            return NotImplemented
        return (self.n_slots == other.n_slots and np.array_equal(self.slots, other.slots)
                and np.array_equal(self.cips, other.cips)
                and np.array_equal(self.counts, other.counts))

    def to_text(self) -> str:
        out = io.StringIO()
        out.write(f"# slots 0 {self.n_slots - 1}\n")
        out.write("slot,cip,count\n")
        for s, c, n in zip(self.slots.tolist(), self.cips.tolist(), self.counts.tolist()):
            out.write(f"{s},{format_ip(c)},{n}\n")
        return out.getvalue()


def slot_indices(trace: Trace, window: WindowConfig) -> np.ndarray:
    slots = window.slot_of(trace.ts)
    if slots.size and slots.min() < 0:
        i = int(np.flatnonzero(slots < 0)[0])
        raise TraceError(f"record {i} has ts {int(trace.ts[i])} before window start {window.start}")
    return slots


def _pair_keys(cip: np.ndarray, oip: np.ndarray) -> np.ndarray:
    return (cip.astype(np.uint64) << np.uint64(32)) | oip.astype(np.uint64)


def exact_counts(trace: Trace, window: WindowConfig, n_slots: int | None = None) -> GroundTruth:
    """Distinct opposites of every host over each trailing window, exactly.

    Each slot's pairs are reduced to a distinct set first; window ``s`` is then
    the union of the sets of slots ``max(0, s-k+1) .. s``.
    """
    slots = slot_indices(trace, window)
    if n_slots is None:
        n_slots = int(slots.max()) + 1 if slots.size else 0
    keys = _pair_keys(trace.cip, trace.oip)
    per_slot = []
    order = np.argsort(slots, kind="stable")
    bounds = np.searchsorted(slots[order], np.arange(n_slots + 1))
    for s in range(n_slots):
        per_slot.append(np.unique(keys[order[bounds[s]:bounds[s + 1]]]))
    out_s, out_c, out_n = [], [], []
    for s in range(n_slots):
        union = np.unique(np.concatenate(per_slot[max(0, s - window.k + 1):s + 1]))
        cips, counts = np.unique((union >> np.uint64(32)).astype(np.uint32), return_counts=True)
        out_s.append(np.full(cips.size, s, dtype=np.int64))
        out_c.append(cips)
        out_n.append(counts)
    if not out_s:
        return GroundTruth([], [], [], n_slots, window.k)
    return GroundTruth(np.concatenate(out_s), np.concatenate(out_c), np.concatenate(out_n),
                       n_slots, window.k)


def read_truth(source) -> GroundTruth:
    """Parse a ``slot,cip,count`` table; ``k`` is unknown and stored as 0."""
    text = _read_bytes(source).decode()
    rows = []
    n_slots = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if line.startswith("# slots"):
            first, last = line.split()[2:4]
            n_slots = int(last) + 1
            continue
        if not line or line.startswith("#") or line.startswith("slot,"):
            continue
        try:
            s, c, n = line.split(",")
            rows.append((int(s), parse_ip(c), int(n)))
        except ValueError as exc:
            raise TraceError(f"truth line {lineno}: {exc}") from None
    if n_slots is None:
        n_slots = max((r[0] for r in rows), default=-1) + 1
    if not rows:
        return GroundTruth([], [], [], n_slots, 0)
    s, c, n = zip(*rows)
    return GroundTruth(s, c, n, n_slots, 0)


# -- synthetic traces ----------------------------------------------------


@dataclass(frozen=True)
class PlantedHost:
    """Host given exactly ``count`` distinct opposites over slots ``first..last``."""

    cip: int
    count: int
    first: int
    last: int


@dataclass(frozen=True)
class Background:
    """Zipf-weighted background traffic.

    Host of rank ``j`` (1-based) talks to a private pool of
    ``max(1, max_peers // j**zipf)`` peers, so no background host ever exceeds
    ``max_peers`` distinct opposites.
    """

    hosts: int = 0
    zipf: float = 1.1
    pairs_per_slot: int = 0
    max_peers: int = 256


@dataclass(frozen=True)
class SynthSpec:
    slots: int
    planted: tuple = ()
    background: Background = field(default_factory=Background)


def parse_synth_spec(text: str) -> SynthSpec:
    """Read an INI-style workload description.

    Example::

        [trace]
        slots = 40

        [background]
        hosts = 50000
        zipf = 1.1
        pairs_per_slot = 20000
        max_peers = 256

        [planted.a]
        cip = 10.1.0.1
        count = 2048
        slots = 0-2
    """
    cp = configparser.ConfigParser()
    cp.read_string(text)
    if not cp.has_section("trace"):
        raise ValueError("workload spec needs a [trace] section")
    slots = cp.getint("trace", "slots")
    bg = Background()
    if cp.has_section("background"):
        sec = cp["background"]
        bg = Background(sec.getint("hosts", 0), sec.getfloat("zipf", 1.1),
                        sec.getint("pairs_per_slot", 0), sec.getint("max_peers", 256))
    planted = []
    for name in cp.sections():
        if not name.startswith("planted"):
            continue
        sec = cp[name]
        first, _, last = sec.get("slots", "0").partition("-")
        planted.append(PlantedHost(parse_ip(sec["cip"]), sec.getint("count"),
                                   int(first), int(last or first)))
    return SynthSpec(slots, tuple(planted), bg)


def _distinct_random(rng: np.random.Generator, n: int, exclude: set[int] = frozenset()) -> np.ndarray:
    """``n`` distinct uniformly random 32-bit values avoiding ``exclude``."""
    if n + len(exclude) > 1 << 32:
        raise ValueError(f"cannot draw {n} distinct addresses from 2**32")
    got = np.empty(0, dtype=np.uint32)
    excl = np.fromiter(exclude, dtype=np.uint32, count=len(exclude))
    while got.size < n:
        draw = rng.integers(0, 1 << 32, size=2 * (n - got.size) + 16, dtype=np.uint64).astype(np.uint32)
        draw = draw[~np.isin(draw, excl)]
        merged = np.concatenate([got, draw])
        _, first = np.unique(merged, return_index=True)
        got = merged[np.sort(first)]
    return got[:n]


def synth_trace(spec: SynthSpec, window: WindowConfig, seed: int) -> tuple[Trace, GroundTruth]:
    """Generate a trace and its exact sliding-window ground truth.

    Each planted host receives its distinct opposites round-robin across its
    active slots, once each. Background pairs are drawn per slot. Window
    ``start`` and ``mu`` must be whole seconds since timestamps are integers.

    Raises:
        ValueError: infeasible or malformed spec.
    """
    if float(window.mu) != int(window.mu) or float(window.start) != int(window.start):
        raise ValueError("synthetic traces need whole-second mu and start")
    mu, start = int(window.mu), int(window.start)
    cips = [p.cip for p in spec.planted]
    if len(set(cips)) != len(cips):
        raise ValueError("planted hosts must be distinct")
    for p in spec.planted:
        if p.count < 1:
            raise ValueError(f"planted host {format_ip(p.cip)} needs count >= 1")
        if not 0 <= p.first <= p.last < spec.slots:
            raise ValueError(f"planted host {format_ip(p.cip)} slots {p.first}-{p.last} "
                             f"outside 0..{spec.slots - 1}")
        if p.count > 1 << 32:
            raise ValueError(f"planted host {format_ip(p.cip)}: {p.count} distinct opposites "
                             "exceed the address space")

    rng = np.random.default_rng(seed)
    slot_cols: list[list[tuple]] = [[] for _ in range(spec.slots)]

    for p in spec.planted:
        oips = _distinct_random(rng, p.count)
        span = p.last - p.first + 1
        which = p.first + np.arange(p.count) % span
        for s in range(p.first, p.last + 1):
            sel = oips[which == s]
            slot_cols[s].append((np.full(sel.size, p.cip, np.uint32), sel))

    bg = spec.background
    if bg.hosts and bg.pairs_per_slot:
        hosts = _distinct_random(rng, bg.hosts, set(cips))
        ranks = np.arange(1, bg.hosts + 1, dtype=np.float64)
        weights = ranks ** -bg.zipf
        weights /= weights.sum()
        pools = np.maximum(1, np.floor(bg.max_peers / ranks ** bg.zipf)).astype(np.int64)
        bases = rng.integers(0, 1 << 32, size=bg.hosts, dtype=np.uint64)
        for s in range(spec.slots):
            h = rng.choice(bg.hosts, size=bg.pairs_per_slot, p=weights)
            peer = rng.integers(0, pools[h])
            oip = ((bases[h] + peer.astype(np.uint64)) & np.uint64(0xFFFFFFFF)).astype(np.uint32)
            slot_cols[s].append((hosts[h], oip))

    ts_parts, cip_parts, oip_parts = [], [], []
    for s, cols in enumerate(slot_cols):
        if not cols:
            continue
        c = np.concatenate([x[0] for x in cols])
        o = np.concatenate([x[1] for x in cols])
        perm = rng.permutation(c.size)
        ts = start + s * mu + rng.integers(0, mu, size=c.size)
        order = np.argsort(ts, kind="stable")
        ts_parts.append(ts[order])
        cip_parts.append(c[perm][order])
        oip_parts.append(o[perm][order])
    if ts_parts:
        trace = Trace(np.concatenate(ts_parts), np.concatenate(cip_parts), np.concatenate(oip_parts))
    else:
        trace = Trace()
    return trace, _window_truth(trace, window, spec.slots)


def _window_truth(trace: Trace, window: WindowConfig, n_slots: int) -> GroundTruth:
    """Ground truth by per-pair coverage intervals (independent of :func:`exact_counts`).

    An appearance of a pair at slot ``t`` keeps it inside windows ``t .. t+k-1``;
    clipping each appearance's interval at the next appearance makes the
    intervals of one pair disjoint, so expanding them counts each (window,
    pair) once.
    """
    k = window.k
    slots = slot_indices(trace, window)
    keys = _pair_keys(trace.cip, trace.oip)
    app = np.unique(np.stack([keys, slots.astype(np.uint64)], axis=1), axis=0)
    if app.shape[0] == 0:
        return GroundTruth([], [], [], n_slots, k)
    pk, t = app[:, 0], app[:, 1].astype(np.int64)
    nxt = np.full(t.size, n_slots, dtype=np.int64)
    same = pk[1:] == pk[:-1]
    nxt[:-1][same] = t[1:][same]
    end = np.minimum(np.minimum(t + k, nxt), n_slots)  # exclusive
    lengths = end - t
    owner = np.repeat(np.arange(t.size), lengths)
    offsets = np.arange(owner.size) - np.repeat(np.cumsum(lengths) - lengths, lengths)
    win = t[owner] + offsets
    cip = (pk[owner] >> np.uint64(32)).astype(np.int64)
    combo = (win << 32) | cip
    uniq, counts = np.unique(combo, return_counts=True)
    return GroundTruth(uniq >> 32, (uniq & 0xFFFFFFFF).astype(np.uint32), counts, n_slots, k)


# -- accuracy ------------------------------------------------------------


@dataclass(frozen=True)
class AccuracyResult:
    """False-positive, false-negative and total false rates for one slot.

    All three are normalised by the number of true super points, so ``fpr``
    can exceed 1. When there are no true super points the slot is flagged
    ``degenerate`` and ``fpr`` is the raw number of reports.
    """

    fpr: float
    fnr: float
    tfr: float
    true_count: int = 0
    false_positives: int = 0
    false_negatives: int = 0
    degenerate: bool = False


def evaluate(reported: Iterable[int], truth: Mapping[int, int], theta: int) -> AccuracyResult:
    reported = set(reported)
    true = {cip for cip, n in truth.items() if n >= theta}
    fp = len(reported - true)
    fn = len(true - reported)
    if not true:
        fpr = float(len(reported))
        return AccuracyResult(fpr, 0.0, fpr, 0, fp, 0, degenerate=bool(reported))
    fpr, fnr = fp / len(true), fn / len(true)
    return AccuracyResult(fpr, fnr, fpr + fnr, len(true), fp, fn)


def mean_accuracy(results: Sequence[AccuracyResult]) -> tuple[float, float, float]:
    if not results:
        return 0.0, 0.0, 0.0
    arr = np.array([(r.fpr, r.fnr, r.tfr) for r in results])
    fpr, fnr, tfr = arr.mean(axis=0)
    return float(fpr), float(fnr), float(tfr)
