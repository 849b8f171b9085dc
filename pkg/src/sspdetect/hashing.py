"""Opposite-host hash and the reversible hash function group.

Two seeded tabulation hashes sit at the bottom of everything:

* ``H1`` maps an outside address to a distance-recorder bucket in ``[0, eta)``.
* row 0 of the reversible group maps an inside address to a column in
  ``[0, 2**q)``.

Rows ``1 .. r-1`` of the group are not independent hashes. Row ``i`` XORs the
q-bit block of the address starting at bit ``(i-1)*delta`` into the row-0
column, so XORing the row-0 and row-i columns hands the block back. Adjacent
blocks overlap in ``q - delta`` bits, which is what lets reconstruction prune
inconsistent column combinations early.

All functions accept either Python ints or numpy ``uint32`` arrays for the
address arguments unless noted.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError

ADDRESS_BITS = 32
ADDRESS_MASK = (1 << ADDRESS_BITS) - 1
MAX_RECORDER = 65535
MAX_WINDOW = MAX_RECORDER - 1


@dataclass(frozen=True)
class RhfgConfig:
    """Shape and seed of the reversible hash function group.

    Attributes:
        q: column index width in bits; a row has ``2**q`` columns.
        r: number of rows (hash functions).
        delta: stride in bits between consecutive address blocks.
        seed: 64-bit seed shared by every node that must agree on hashes.
    """

    q: int = 14
    r: int = 5
    delta: int = 6
    seed: int = 0x5EED_5EED_5EED_5EED

    @property
    def columns(self) -> int:
        return 1 << self.q

    @property
    def col_mask(self) -> int:
        return (1 << self.q) - 1

    @property
    def overlap(self) -> int:
        """Bits shared by two adjacent blocks."""
        return self.q - self.delta

    @property
    def coverage(self) -> int:
        return (self.r - 2) * self.delta + self.q

    def offset(self, i: int) -> int:
        """Bit offset of block ``i`` (1-based) inside the address."""
        return (i - 1) * self.delta


def config_problems(cfg: RhfgConfig, eta: int | None = None, k: int | None = None,
                    theta: int | None = None) -> list[str]:
    """Return every constraint the parameter set violates (empty when valid)."""
    problems = []
    if not 0 < cfg.delta < cfg.q:
        problems.append(f"delta must satisfy 0 < delta < q (delta={cfg.delta}, q={cfg.q})")
    if cfg.r < 3:
        problems.append(f"r must be at least 3 (r={cfg.r})")
    if not 1 <= cfg.q <= 16:
        problems.append(f"q must be in [1, 16] (q={cfg.q})")
    if cfg.coverage < ADDRESS_BITS:
        problems.append(
            f"coverage (r-2)*delta+q = {cfg.r - 2}*{cfg.delta}+{cfg.q} = {cfg.coverage} "
            f"< {ADDRESS_BITS}"
        )
    if not 0 <= cfg.seed < 1 << 64:
        problems.append(f"seed must be a 64-bit unsigned value (seed={cfg.seed})")
    if eta is not None and eta < 2:
        problems.append(f"eta must be at least 2 (eta={eta})")
    if k is not None and not 1 <= k <= MAX_WINDOW:
        problems.append(f"k must be in [1, {MAX_WINDOW}] (k={k})")
    if theta is not None and theta < 1:
        problems.append(f"theta must be at least 1 (theta={theta})")
    return problems


def validate_config(cfg: RhfgConfig, eta: int | None = None, k: int | None = None,
                    theta: int | None = None) -> None:
    """Raise :class:`ConfigError` naming every violated constraint."""
    problems = config_problems(cfg, eta, k, theta)
    if problems:
        raise ConfigError(problems)


class HashSeeds:
    """Tabulation tables for ``H1`` and row 0, expanded from a 64-bit seed.

    Each hash XORs four 256-entry tables of random 32-bit words, one per
    address byte. The two table sets come from independent children of a
    numpy ``SeedSequence`` so that identical seeds give identical tables on
    every node and numpy version.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        ss = np.random.SeedSequence(self.seed)
        h1_seq, row0_seq = ss.spawn(2)
        self.h1_tables = _tables(h1_seq)
        self.row0_tables = _tables(row0_seq)
        # plain-int copies make scalar lookups cheap
        self._h1_lists = [t.tolist() for t in self.h1_tables]
        self._row0_lists = [t.tolist() for t in self.row0_tables]

    def opposite(self, oip, eta: int):
        """Bucket index ``H1(oip) mod eta``."""
        return _tabulate(oip, self.h1_tables, self._h1_lists) % eta

    def row0(self, cip, q: int):
        """Column index of ``cip`` in row 0."""
        return _tabulate(cip, self.row0_tables, self._row0_lists) & ((1 << q) - 1)


def _tables(seq: np.random.SeedSequence) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(seq))
    tables = rng.integers(0, 1 << 32, size=(4, 256), dtype=np.uint64).astype(np.uint32)
    tables.setflags(write=False)
    return tables


def _tabulate(x, tables, lists):
    if isinstance(x, (int, np.integer)):
        x = int(x)
        return (lists[0][x & 0xFF] ^ lists[1][(x >> 8) & 0xFF]
                ^ lists[2][(x >> 16) & 0xFF] ^ lists[3][(x >> 24) & 0xFF])
    x = np.asarray(x, dtype=np.uint32)
    return (tables[0][x & 0xFF] ^ tables[1][(x >> 8) & 0xFF]
            ^ tables[2][(x >> 16) & 0xFF] ^ tables[3][x >> 24])


@lru_cache(maxsize=16)
def hash_seeds(seed: int) -> HashSeeds:
    return HashSeeds(seed)


def hash_opposite(oip, eta: int, seed: int = RhfgConfig.seed):
    """Map an outside address to its distance-recorder bucket in ``[0, eta)``."""
    if eta < 1:
        raise ValueError(f"eta must be positive, got {eta}")
    return hash_seeds(seed).opposite(oip, eta)


def rhfg(i: int, cip, cfg: RhfgConfig, col0=None):
    """Column of ``cip`` in row ``i`` of the reversible group.

    ``col0`` may carry a precomputed row-0 column so batch callers hash once.
    """
    if not 0 <= i < cfg.r:
        raise IndexError(f"row index {i} outside [0, {cfg.r})")
    if col0 is None:
        col0 = hash_seeds(cfg.seed).row0(cip, cfg.q)
    if i == 0:
        return col0
    if isinstance(cip, (int, np.integer)):
        return ((int(cip) >> cfg.offset(i)) ^ col0) & cfg.col_mask
    cip = np.asarray(cip, dtype=np.uint32)
    return ((cip >> np.uint32(cfg.offset(i))) ^ col0) & np.uint32(cfg.col_mask)


def rhfg_all(cip, cfg: RhfgConfig) -> np.ndarray:
    """All r columns of each address; shape ``(n, r)`` for array input."""
    cip = np.atleast_1d(np.asarray(cip, dtype=np.uint32))
    col0 = hash_seeds(cfg.seed).row0(cip, cfg.q)
    out = np.empty((cip.size, cfg.r), dtype=np.uint32)
    for i in range(cfg.r):
        out[:, i] = rhfg(i, cip, cfg, col0=col0)
    return out


class BitBlock(NamedTuple):
    """q-bit slice of an address at offset ``(index-1)*delta``."""

    index: int
    value: int


def recover_block(col0: int, coli: int, i: int) -> BitBlock:
    """Undo row ``i``'s XOR to get block ``B(i)`` back from two columns."""
    if i < 1:
        raise ValueError(f"block index must be >= 1, got {i}")
    return BitBlock(i, int(col0) ^ int(coli))


def slice_blocks(cip, cfg: RhfgConfig) -> list[BitBlock]:
    """Cut ``cip`` into its blocks ``B(1) .. B(r-1)`` directly."""
    cip = int(cip)
    return [BitBlock(i, (cip >> cfg.offset(i)) & cfg.col_mask) for i in range(1, cfg.r)]


def blocks_consistent(b_lo: BitBlock, b_hi: BitBlock, cfg: RhfgConfig) -> bool:
    """True iff the top ``q-delta`` bits of ``b_lo`` equal the bottom ones of ``b_hi``."""
    if b_hi.index != b_lo.index + 1:
        raise ValueError(f"blocks {b_lo.index} and {b_hi.index} are not adjacent")
    return consistent_values(b_lo.value, b_hi.value, cfg)


def consistent_values(lo, hi, cfg: RhfgConfig):
    """Overlap test on raw block values; vectorises over numpy arrays."""
    overlap_mask = (1 << cfg.overlap) - 1
    return (lo >> cfg.delta) == (hi & overlap_mask)


def assemble_ip(blocks: Sequence[BitBlock], cfg: RhfgConfig) -> int:
    """Rebuild the 32-bit address from ``B(1) .. B(r-1)``.

    Raises:
        ValueError: the blocks are incomplete, out of order, or some adjacent
            pair disagrees on its overlapping bits.
    """
    if [b.index for b in blocks] != list(range(1, cfg.r)):
        raise ValueError(f"expected blocks 1..{cfg.r - 1} in order")
    for lo, hi in zip(blocks, blocks[1:]):
        if not blocks_consistent(lo, hi, cfg):
            raise ValueError(f"blocks {lo.index} and {hi.index} are inconsistent")
    cip = 0
    for b in blocks:
        cip |= b.value << cfg.offset(b.index)
    # bits past 31 (coverage > 32) are dropped; a caller that re-hashes the
    # result, as finalize does, rejects tuples whose top block carried any
    return cip & ADDRESS_MASK


def assemble_ips(block_values: np.ndarray, cfg: RhfgConfig) -> np.ndarray:
    """Vectorised :func:`assemble_ip` for an ``(n, r-1)`` array of block values.

    The caller guarantees consistency; no checking happens here.
    """
    block_values = np.asarray(block_values, dtype=np.uint64)
    cip = np.zeros(block_values.shape[0], dtype=np.uint64)
    for i in range(1, cfg.r):
        cip |= block_values[:, i - 1] << np.uint64(cfg.offset(i))
    return (cip & np.uint64(ADDRESS_MASK)).astype(np.uint32)
