import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sspdetect.errors import CandidateOverflow
from sspdetect.hashing import RhfgConfig, rhfg_all, slice_blocks
from sspdetect.reconstruct import (
    CandidateBuffer, finalize_candidate, reconstruct, reconstruct_leveled, reconstruct_recursive,
)
from sspdetect.rsea import Rsea

DESK = RhfgConfig(q=10, r=5, delta=8, seed=0xABC)
ETA, K, THETA = 256, 30, 128


def plant(g, cip, n, seed):
    rng = np.random.default_rng(seed)
    oips = rng.integers(0, 2**32, size=n, dtype=np.uint64).astype(np.uint32)
    g.scan(np.full(n, cip, dtype=np.uint32), oips)


def heat_column(g, row, col, n=ETA):
    g.grid[row, col, :n] = 0


def test_empty_grid_reports_nothing():
    g = Rsea(DESK, ETA)
    assert reconstruct_recursive(g, K, THETA).entries == []
    assert reconstruct_leveled(g, K, THETA).entries == []


def test_single_planted_host():
    g = Rsea(DESK, ETA)
    rng = np.random.default_rng(0)
    bg_c = rng.integers(0, 2**32, 5000, dtype=np.uint64).astype(np.uint32)
    bg_o = rng.integers(0, 2**32, 5000, dtype=np.uint64).astype(np.uint32)
    g.scan(bg_c, bg_o)
    plant(g, 0xC0A80101, 2 * THETA, 1)
    for strategy in ("recursive", "leveled"):
        rep = reconstruct(g, K, THETA, strategy)
        assert rep.cips == {0xC0A80101}
        assert rep.entries[0][1] >= THETA


def test_finalize_requires_hot_union():
    g = Rsea(DESK, ETA)
    cip = 0x01020304
    cols = rhfg_all(cip, DESK)[0].tolist()
    # 20 cold buckets per column, different in each: 156 shared active buckets
    for i, c in enumerate(cols):
        g.grid[i, c, :] = 0
        g.grid[i, c, i * 20:(i + 1) * 20] = 65535
    assert finalize_candidate(g, cols, K, THETA) is not None
    # rows 0 and 3 are both hot (120 active each) but share no active bucket
    for i, c in enumerate(cols):
        g.grid[i, c, :] = 0
    g.grid[0, cols[0], 120:] = 65535
    g.grid[3, cols[3], :136] = 65535
    assert finalize_candidate(g, cols, K, THETA) is None


def test_finalize_rejects_row0_mismatch():
    g = Rsea(DESK, ETA)
    cip = 0x0A0B0C0D
    blocks = [b.value for b in slice_blocks(cip, DESK)]
    true_col0 = int(rhfg_all(cip, DESK)[0, 0])
    # brute force a row-0 column that is not cip's, keeping every block intact
    c0 = next(c for c in range(DESK.columns) if c != true_col0)
    fake = [c0] + [c0 ^ b for b in blocks]
    for i, c in enumerate(fake):
        heat_column(g, i, c)
    assert finalize_candidate(g, fake, K, THETA) is None
    real = [true_col0] + [true_col0 ^ b for b in blocks]
    for i, c in enumerate(real):
        heat_column(g, i, c)
    cip_out, est = finalize_candidate(g, real, K, THETA)
    assert cip_out == cip and est > THETA
    with pytest.raises(ValueError):
        finalize_candidate(g, real[:3], K, THETA)


def test_missing_row_empties_report():
    g = Rsea(DESK, ETA)
    plant(g, 0x0A000001, 400, 2)
    cols = rhfg_all(0x0A000001, DESK)[0]
    g.grid[3, cols[3]] = 65535
    assert reconstruct_leveled(g, K, THETA).entries == []
    assert reconstruct_recursive(g, K, THETA).entries == []


def random_hot_state(seed, hosts=6, noise_cols=25):
    rng = np.random.default_rng(seed)
    g = Rsea(DESK, ETA)
    cips = rng.integers(0, 2**32, hosts, dtype=np.uint64).astype(np.uint32)
    for j, c in enumerate(cips):
        plant(g, int(c), int(rng.integers(THETA, 3 * THETA)), seed * 100 + j)
    for _ in range(noise_cols):
        row, col = int(rng.integers(0, DESK.r)), int(rng.integers(0, DESK.columns))
        heat_column(g, row, col, int(rng.integers(100, ETA)))
    return g, set(cips.tolist())


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_strategies_agree(seed):
    g, _ = random_hot_state(seed)
    rec = reconstruct_recursive(g, K, THETA)
    for workers in (1, 3):
        assert reconstruct_leveled(g, K, THETA, workers=workers).entries == rec.entries


def test_completeness_of_hot_hosts():
    # any host whose own columns pass the final check must come out of the search
    for seed in range(5):
        g, cips = random_hot_state(seed, hosts=10)
        passing = {c for c in cips
                   if finalize_candidate(g, rhfg_all(c, DESK)[0].tolist(), K, THETA)}
        assert passing
        assert passing <= reconstruct_leveled(g, K, THETA).cips
        assert passing <= reconstruct_recursive(g, K, THETA).cips


def test_dedupe_keeps_single_entry():
    g, _ = random_hot_state(3)
    rep = reconstruct_leveled(g, K, THETA)
    assert len(rep.entries) == len(rep.cips)
    assert [c for c, _ in rep.entries] == sorted(rep.cips)


def test_candidate_buffer_growth_and_cap():
    buf = CandidateBuffer(cap=100, initial=4)
    buf.reset(3)
    buf.extend(np.ones((3, 3), np.uint32), level=2)
    buf.extend(np.full((10, 3), 2, np.uint32), level=2)
    assert buf.size == 13 and buf.tuples[3:].min() == 2 and buf.tuples[:3].max() == 1
    with pytest.raises(CandidateOverflow) as err:
        buf.extend(np.zeros((90, 3), np.uint32), level=3)
    assert err.value.level == 3 and err.value.count == 103


def test_leveled_cap_aborts():
    g = Rsea(DESK, ETA)
    for row in range(DESK.r):
        for col in range(40):
            heat_column(g, row, col)
    with pytest.raises(CandidateOverflow):
        reconstruct_leveled(g, K, THETA, cap=50)
