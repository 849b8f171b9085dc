import numpy as np
import pytest
from hypothesis import given, strategies as st

from sspdetect.errors import ConfigError
from sspdetect.hashing import (
    BitBlock, RhfgConfig, assemble_ip, assemble_ips, blocks_consistent, config_problems,
    hash_opposite, hash_seeds, recover_block, rhfg, rhfg_all, slice_blocks, validate_config,
)

FULL = RhfgConfig(q=14, r=5, delta=6, seed=0x1234)
DESK = RhfgConfig(q=10, r=5, delta=8, seed=0x1234)
addresses = st.integers(min_value=0, max_value=2**32 - 1)


def bit_slice(cip, lo, width):
    """Independent bit-by-bit extraction, no shifts of the whole word."""
    bits = [(cip >> (lo + j)) & 1 if lo + j < 32 else 0 for j in range(width)]
    return sum(b << j for j, b in enumerate(bits))


def test_hash_opposite_single_bucket():
    assert hash_opposite(0xDEADBEEF, 1) == 0


def test_hash_opposite_deterministic():
    assert hash_opposite(0x0A000001, 2048, seed=7) == hash_opposite(0x0A000001, 2048, seed=7)


def test_hash_opposite_scalar_matches_vector():
    xs = np.array([0, 1, 0xFFFFFFFF, 0xC0A80101], dtype=np.uint32)
    vec = hash_opposite(xs, 2048, seed=9)
    assert vec.tolist() == [hash_opposite(int(x), 2048, seed=9) for x in xs]


def test_hash_opposite_uniform():
    rng = np.random.default_rng(0)
    xs = rng.integers(0, 2**32, size=10**6, dtype=np.uint64).astype(np.uint32)
    counts = np.bincount(hash_opposite(xs, 2048, seed=3), minlength=2048)
    expected = xs.size / 2048
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    # upper 1% point of chi-square with 2047 dof (normal approximation)
    dof = 2047
    assert chi2 < dof + 2.326 * (2 * dof) ** 0.5 + 1


def test_seed_changes_tables():
    assert not np.array_equal(hash_seeds(1).h1_tables, hash_seeds(2).h1_tables)
    assert not np.array_equal(hash_seeds(1).h1_tables, hash_seeds(1).row0_tables)


def test_rhfg_zero_address():
    col0 = rhfg(0, 0, FULL)
    assert all(rhfg(i, 0, FULL) == col0 for i in range(1, 5))


def test_rhfg_all_ones():
    assert rhfg(1, 0xFFFFFFFF, FULL) == (0x3FFF ^ rhfg(0, 0xFFFFFFFF, FULL)) % 2**14


def test_rhfg_row_out_of_range():
    with pytest.raises(IndexError):
        rhfg(5, 1, FULL)
    with pytest.raises(IndexError):
        rhfg(-1, 1, FULL)


@given(addresses)
def test_recover_block_matches_bit_slice(cip):
    for i in range(1, FULL.r):
        block = recover_block(rhfg(0, cip, FULL), rhfg(i, cip, FULL), i)
        assert block == BitBlock(i, bit_slice(cip, (i - 1) * 6, 14))


def test_recover_block_identities():
    assert recover_block(123, 123, 2).value == 0
    assert recover_block(0, 0x2A5, 3).value == 0x2A5
    with pytest.raises(ValueError):
        recover_block(1, 2, 0)


def test_recover_block_bulk():
    rng = np.random.default_rng(1)
    cips = rng.integers(0, 2**32, size=10**5, dtype=np.uint64).astype(np.uint32)
    cols = rhfg_all(cips, FULL)
    for i in range(1, FULL.r):
        expected = np.array([bit_slice(int(c), (i - 1) * 6, 14) for c in cips[:2000]])
        assert np.array_equal((cols[:2000, 0] ^ cols[:2000, i]), expected)
        # vectorised shift path against the scalar slice on the full set
        assert np.array_equal(cols[:, 0] ^ cols[:, i], (cips >> ((i - 1) * 6)) & 0x3FFF)


def test_blocks_consistent_cases():
    assert blocks_consistent(BitBlock(1, 0), BitBlock(2, 0), FULL)
    assert not blocks_consistent(BitBlock(1, 0x3F00), BitBlock(2, 0x0001), FULL)
    assert blocks_consistent(BitBlock(1, 0x3F00), BitBlock(2, 0x00FC), FULL)
    with pytest.raises(ValueError):
        blocks_consistent(BitBlock(1, 0), BitBlock(3, 0), FULL)


@given(addresses)
def test_slices_of_one_address_are_consistent(cip):
    for cfg in (FULL, DESK):
        blocks = slice_blocks(cip, cfg)
        assert all(blocks_consistent(a, b, cfg) for a, b in zip(blocks, blocks[1:]))


def test_assemble_examples():
    assert assemble_ip([BitBlock(i, 0) for i in range(1, 5)], FULL) == 0
    blocks = [BitBlock(1, 0x101), BitBlock(2, 0x2004), BitBlock(3, 0xA80), BitBlock(4, 0x302A)]
    assert slice_blocks(0xC0A80101, FULL) == blocks
    assert assemble_ip(blocks, FULL) == 0xC0A80101


def test_assemble_rejects_inconsistent():
    with pytest.raises(ValueError):
        assemble_ip([BitBlock(1, 0x3F00), BitBlock(2, 1), BitBlock(3, 0), BitBlock(4, 0)], FULL)
    with pytest.raises(ValueError):
        assemble_ip([BitBlock(1, 0), BitBlock(2, 0)], FULL)


@given(addresses)
def test_assemble_round_trip(cip):
    for cfg in (FULL, DESK):
        assert assemble_ip(slice_blocks(cip, cfg), cfg) == cip


def test_assemble_vector_round_trip():
    rng = np.random.default_rng(2)
    cips = rng.integers(0, 2**32, size=10**6, dtype=np.uint64).astype(np.uint32)
    for cfg in (FULL, DESK):
        cols = rhfg_all(cips, cfg)
        assert np.array_equal(assemble_ips(cols[:, :1] ^ cols[:, 1:], cfg), cips)


def test_validate_full_scale_parameters():
    validate_config(FULL, eta=2048, k=300, theta=1024)


def test_validate_rejects_low_coverage():
    with pytest.raises(ConfigError) as err:
        validate_config(RhfgConfig(q=8, r=5, delta=6), eta=2048, k=300, theta=1024)
    assert "26 < 32" in str(err.value)


def test_validate_rejects_k_65535():
    problems = config_problems(FULL, eta=2048, k=65535, theta=1024)
    assert len(problems) == 1 and "k must be" in problems[0]
    assert config_problems(FULL, k=65534) == []


def test_validate_names_every_problem():
    problems = config_problems(RhfgConfig(q=20, r=2, delta=25), eta=1, k=0, theta=0)
    joined = " | ".join(problems)
    for word in ("delta", "r must", "q must", "eta", "k must", "theta"):
        assert word in joined
