"""Random stream contracts: frozen golden sequence, determinism,
distribution statistics."""

import numpy as np
import pytest

from duovc.rng import Rng

# First 8 raw draws for seed 42, generated once and frozen.  A change
# here means the stream is no longer reproducible across versions.
GOLDEN_U64_SEED42 = [
    13679457532755275413, 2949826092126892291, 5139283748462763858,
    6349198060258255764, 701532786141963250, 16015981125662989062,
    4028864712777624925, 14769051326987775908,
]

GOLDEN_NORMAL_SEED42 = [
    0.7513233423233032, 1.2951186895370483, 0.31529372930526733,
    0.4568367004394531, 0.18302592635154724, -1.4103018045425415,
    1.567334771156311, -1.3872343301773071,
]


def test_golden_sequence():
    draws = Rng(42).next_u64(8)
    assert [int(v) for v in draws] == GOLDEN_U64_SEED42


def test_golden_normals_bitwise():
    vals = Rng(42).normal((8,))
    assert vals.dtype == np.float32
    assert [float(v) for v in vals] == GOLDEN_NORMAL_SEED42


def test_same_seed_same_stream():
    a, b = Rng(7), Rng(7)
    assert np.array_equal(a.normal((100,)), b.normal((100,)))
    assert np.array_equal(a.uniform((50,)), b.uniform((50,)))


def test_streams_differ_across_seeds():
    assert not np.array_equal(Rng(1).normal((64,)), Rng(2).normal((64,)))


def test_chunked_draws_match_bulk():
    bulk = Rng(3).next_u64(10)
    r = Rng(3)
    parts = np.concatenate([r.next_u64(4), r.next_u64(6)])
    assert np.array_equal(bulk, parts)


def test_normal_zero_std_is_degenerate():
    assert np.array_equal(Rng(0).normal((4,), 0.0, 0.0), np.zeros(4, dtype=np.float32))


def test_normal_negative_std_rejected():
    with pytest.raises(ValueError):
        Rng(0).normal((4,), 0.0, -1.0)


def test_normal_statistics():
    # CLT bounds from the contract: 1e5 standard normals
    samples = Rng(123).normal((100_000,), 0.0, 1.0).astype(np.float64)
    assert -0.02 <= samples.mean() <= 0.02
    assert 0.98 <= samples.std() <= 1.02


def test_normal_mean_std_applied():
    samples = Rng(5).normal((50_000,), 3.0, 0.5).astype(np.float64)
    assert abs(samples.mean() - 3.0) < 0.02
    assert abs(samples.std() - 0.5) < 0.02


def test_uniform_range_and_stats():
    u = Rng(11).uniform((50_000,), -2.0, 4.0).astype(np.float64)
    assert u.min() >= -2.0 and u.max() < 4.0
    assert abs(u.mean() - 1.0) < 0.05


def test_integers_range():
    vals = Rng(9).integers(3, 9, 1000)
    assert vals.min() >= 3 and vals.max() <= 8


def test_choice_without_excludes_and_distinct():
    for seed in range(20):
        picks = Rng(seed).choice_without(10, 4, 6)
        assert 4 not in picks
        assert len(set(picks.tolist())) == 6
        assert all(0 <= p < 10 for p in picks)


def test_fork_gives_independent_stream():
    parent = Rng(77)
    child = parent.fork()
    assert not np.array_equal(parent.normal((32,)), Rng(77).normal((32,)))
    assert not np.array_equal(child.normal((32,)), parent.normal((32,)))
