import io
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sspdetect.errors import TraceError
from sspdetect.estimator import WindowConfig
from sspdetect.workload import (
    Background, CnetSpec, GroundTruth, PlantedHost, SynthSpec, Trace, encode_trace, evaluate,
    exact_counts, format_ip, mean_accuracy, orient_pairs, orient_trace, parse_ip,
    parse_synth_spec, read_trace, read_truth, synth_trace,
)

A, B = 0x0A000001, 0x0A000002
X, Y = 0x08080808, 0x01010101


def test_parse_and_format_ip():
    assert parse_ip("192.168.1.1") == 0xC0A80101
    assert parse_ip("3232235777") == 0xC0A80101
    assert format_ip(0xC0A80101) == "192.168.1.1"
    for bad in ("1.2.3", "256.0.0.1", "-1", "4294967296", "x"):
        with pytest.raises(ValueError):
            parse_ip(bad)


def test_empty_trace():
    t = read_trace(io.BytesIO(encode_trace(Trace())))
    assert len(t) == 0
    truth = exact_counts(t, WindowConfig(k=5))
    assert truth.n_slots == 0 and truth.at(0) == {}


def test_text_record():
    t = read_trace(io.StringIO("0,192.168.1.1,10.0.0.1\n"), format="text")
    assert list(t) == [(0, 0xC0A80101, 0x0A000001)]


def test_text_comments_and_decimal():
    t = read_trace(io.StringIO("# header\n\n5,3232235777,1\n"), format="text")
    assert list(t) == [(5, 0xC0A80101, 1)]


def test_binary_text_round_trip():
    rng = np.random.default_rng(0)
    n = 500
    t = Trace(np.sort(rng.integers(0, 10**6, n)), rng.integers(0, 2**32, n, dtype=np.uint64),
              rng.integers(0, 2**32, n, dtype=np.uint64))
    for fmt in ("binary", "text"):
        data = encode_trace(t, fmt)
        assert read_trace(io.BytesIO(data)) == t
        assert read_trace(io.BytesIO(data), format=fmt) == t


def test_malformed_text_names_line():
    with pytest.raises(TraceError, match="line 2"):
        read_trace(io.StringIO("0,1.1.1.1,2.2.2.2\n1,1.1.1.1\n"), format="text")
    with pytest.raises(TraceError, match="line 1"):
        read_trace(io.StringIO("0,1.1.1.999,2.2.2.2\n"), format="text")


def test_malformed_binary():
    good = encode_trace(Trace.from_records([(0, 1, 2), (1, 3, 4)]))
    with pytest.raises(TraceError):
        read_trace(io.BytesIO(good[:-3]), format="binary")
    with pytest.raises(TraceError):
        read_trace(io.BytesIO(b"XXXX" + good[4:]), format="binary")


def test_timestamp_regression():
    with pytest.raises(TraceError, match="record 2"):
        read_trace(io.StringIO("0,1,2\n5,1,2\n4,1,2\n"), format="text")


def test_orient_pairs():
    cnet = CnetSpec(["10.0.0.0/8"])
    assert orient_pairs(A, X, cnet) == (A, X)
    assert orient_pairs(X, A, cnet) == (A, X)
    assert orient_pairs(A, B, cnet) is None
    assert orient_pairs(X, Y, cnet) is None
    raw = Trace.from_records([(0, A, X), (1, X, A), (2, A, B), (3, X, Y)])
    assert list(orient_trace(raw, cnet)) == [(0, A, X), (1, A, X)]
    with pytest.raises(ValueError):
        CnetSpec(["10.0.0.1/8"])


def test_four_pair_example():
    t = Trace.from_records([(0, A, X), (0, A, Y), (0, A, X), (0, B, X)])
    truth = exact_counts(t, WindowConfig(k=1))
    assert truth.at(0) == {A: 2, B: 1}


def test_window_slides():
    # A meets X at slot 0, Y at slot 2; window of 2 slots
    t = Trace.from_records([(0, A, X), (2, A, Y), (3, A, Y)])
    truth = exact_counts(t, WindowConfig(k=2))
    assert [truth.at(s).get(A, 0) for s in range(4)] == [1, 1, 1, 1]
    truth = exact_counts(t, WindowConfig(k=3))
    assert [truth.at(s).get(A, 0) for s in range(4)] == [1, 1, 2, 1]


def brute_force(records, mu, k, n_slots):
    per_slot = defaultdict(set)
    for ts, c, o in records:
        per_slot[ts // mu].add((c, o))
    out = {}
    for w in range(n_slots):
        pairs = set().union(*(per_slot[s] for s in range(max(0, w - k + 1), w + 1)))
        counts = defaultdict(int)
        for c, _ in pairs:
            counts[c] += 1
        out[w] = dict(counts)
    return out


records = st.lists(st.tuples(st.integers(0, 60), st.integers(0, 5), st.integers(0, 12)),
                   max_size=80).map(sorted)


@settings(max_examples=80, deadline=None)
@given(records, st.integers(1, 4), st.integers(1, 8))
def test_exact_counts_matches_brute_force(recs, mu, k):
    t = Trace.from_records(recs)
    truth = exact_counts(t, WindowConfig(mu=mu, k=k))
    n_slots = truth.n_slots
    assert n_slots == (recs[-1][0] // mu + 1 if recs else 0)
    expected = brute_force(recs, mu, k, n_slots)
    for w in range(n_slots):
        assert truth.at(w) == expected[w]


def test_truth_text_round_trip():
    t = Trace.from_records([(0, A, X), (0, A, Y), (1, B, X)])
    truth = exact_counts(t, WindowConfig(k=2))
    back = read_truth(io.StringIO(truth.to_text()))
    assert back == truth and back.n_slots == 2


SPEC_TEXT = """
[trace]
slots = 6

[background]
hosts = 300
zipf = 1.1
pairs_per_slot = 400
max_peers = 64

[planted.big]
cip = 10.9.9.9
count = 2048
slots = 0-0

[planted.spread]
cip = 10.9.9.10
count = 300
slots = 2-4
"""


def test_parse_synth_spec():
    spec = parse_synth_spec(SPEC_TEXT)
    assert spec.slots == 6
    assert spec.background == Background(300, 1.1, 400, 64)
    assert PlantedHost(parse_ip("10.9.9.10"), 300, 2, 4) in spec.planted


def test_synth_deterministic_and_seeded():
    spec = parse_synth_spec(SPEC_TEXT)
    w = WindowConfig(k=3)
    t1, g1 = synth_trace(spec, w, seed=1)
    t2, g2 = synth_trace(spec, w, seed=1)
    t3, _ = synth_trace(spec, w, seed=2)
    assert t1 == t2 and g1 == g2
    assert t1 != t3


def test_synth_planted_exact():
    spec = parse_synth_spec(SPEC_TEXT)
    trace, truth = synth_trace(spec, WindowConfig(k=3), seed=3)
    big, spread = parse_ip("10.9.9.9"), parse_ip("10.9.9.10")
    assert truth.at(0)[big] == 2048
    assert truth.at(2).get(big, 0) == 2048 and big not in truth.at(3)
    assert [truth.at(s).get(spread, 0) for s in range(6)] == [0, 0, 100, 200, 300, 200]
    assert truth.supers(0, 1024) == {big}


def test_synth_truth_matches_exact_counts():
    spec = parse_synth_spec(SPEC_TEXT)
    for k, mu in [(1, 1), (3, 1), (4, 5)]:
        w = WindowConfig(mu=mu, k=k, start=100)
        trace, truth = synth_trace(spec, w, seed=k)
        assert exact_counts(trace, w, n_slots=spec.slots) == truth


def test_background_stays_small():
    spec = SynthSpec(4, (), Background(1000, 1.1, 5000, 64))
    _, truth = synth_trace(spec, WindowConfig(k=4), seed=0)
    assert truth.counts.max() <= 64


def test_synth_rejects_infeasible():
    w = WindowConfig(k=2)
    with pytest.raises(ValueError):
        synth_trace(SynthSpec(3, (PlantedHost(A, 10, 2, 5),)), w, 0)
    with pytest.raises(ValueError):
        synth_trace(SynthSpec(3, (PlantedHost(A, 10, 0, 0), PlantedHost(A, 5, 1, 1))), w, 0)
    with pytest.raises(ValueError):
        synth_trace(SynthSpec(3, (PlantedHost(A, 0, 0, 0),)), w, 0)
    with pytest.raises(ValueError):
        synth_trace(SynthSpec(3, ()), WindowConfig(mu=0.5, k=2), 0)


def test_evaluate_examples():
    truth = {i: 2000 for i in range(10)}
    r = evaluate(set(range(9)) | {100}, truth, 1024)
    assert (r.fpr, r.fnr, r.tfr) == (0.1, 0.1, 0.2)
    r = evaluate(set(range(8)) | {100}, truth, 1024)
    assert (r.fpr, r.fnr) == (0.1, 0.2) and r.tfr == pytest.approx(0.3)
    r = evaluate(range(10), truth, 1024)
    assert (r.fpr, r.fnr, r.tfr, r.degenerate) == (0, 0, 0, False)


def test_evaluate_degenerate():
    assert evaluate([], {1: 5}, 1024).degenerate is False
    r = evaluate([7, 8], {1: 5}, 1024)
    assert r.degenerate and r.fpr == 2 and r.false_positives == 2
    assert mean_accuracy([]) == (0.0, 0.0, 0.0)
    assert mean_accuracy([evaluate([1], {1: 2000}, 1024), evaluate([], {1: 2000}, 1024)]) \
        == (0.0, 0.5, 0.5)


def test_ground_truth_filtered():
    g = GroundTruth([0, 0, 1], [1, 2, 1], [5, 50, 7], 2, 1)
    assert g.filtered(6).at(0) == {2: 50}
    assert g.supers(1, 7) == {1}
