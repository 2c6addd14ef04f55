import numpy as np
import pytest

from hdgan.rng import LANES, Rng, derive_seed, fnv1a64, mix64

MASK = (1 << 64) - 1


def _splitmix_ref(seed, count):
    """Sequential splitmix64, straight from its definition."""
    state = seed & MASK
    out = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        out.append((z ^ (z >> 31)) & MASK)
    return out


def _xoshiro_ref(state, count):
    """Sequential xoshiro256**, straight from its definition."""

    def rotl(x, k):
        return ((x << k) | (x >> (64 - k))) & MASK

    s0, s1, s2, s3 = state
    out = []
    for _ in range(count):
        out.append((rotl((s1 * 5) & MASK, 7) * 9) & MASK)
        t = (s1 << 17) & MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = rotl(s3, 45)
    return out


def test_matches_scalar_algorithm_definitions():
    # lane i is seeded with splitmix outputs 4i..4i+3 and the stream is
    # emitted round-major, so word j of round r belongs to lane j
    seed = 123456789
    words = _splitmix_ref(seed, 4 * LANES)
    rng = Rng(seed)
    first_rounds = rng.u64(2 * LANES)
    for lane in (0, 1, 7, LANES - 1):
        lane_state = words[4 * lane : 4 * lane + 4]
        expected = _xoshiro_ref(lane_state, 2)
        assert int(first_rounds[lane]) == expected[0]
        assert int(first_rounds[LANES + lane]) == expected[1]


def test_stream_independent_of_call_granularity():
    a = Rng(99)
    b = Rng(99)
    chunks = np.concatenate([a.u64(7), a.u64(1), a.u64(5000), a.u64(3)])
    assert np.array_equal(chunks, b.u64(7 + 1 + 5000 + 3))


def test_same_seed_same_stream():
    assert np.array_equal(Rng(5).u64(100), Rng(5).u64(100))
    assert not np.array_equal(Rng(5).u64(100), Rng(6).u64(100))


def test_derive_seed_separates_tags_and_indices():
    seeds = {
        derive_seed(1, "split"),
        derive_seed(1, "epoch", 0),
        derive_seed(1, "epoch", 1),
        derive_seed(2, "epoch", 1),
        derive_seed(1, "dropout", 1),
    }
    assert len(seeds) == 5
    assert derive_seed(1, "epoch", 3) == derive_seed(1, "epoch", 3)


def test_fnv_and_mix_are_stable():
    # frozen reference values guard the hash definitions
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert mix64(0) == 0
    assert mix64(1) == 6238072747940578789


def test_random_range_and_determinism():
    values = Rng(7).random(10000)
    assert values.min() >= 0.0
    assert values.max() < 1.0
    assert abs(values.mean() - 0.5) < 0.02
    assert Rng(7).random() == Rng(7).random()


def test_bounded_integers():
    rng = Rng(11)
    draws = rng.integers(13, 5000)
    assert draws.min() >= 0 and draws.max() < 13
    assert len(np.unique(draws)) == 13
    assert 0 <= Rng(11).below(3) < 3
    with pytest.raises(ValueError):
        rng.below(0)


def test_permutation_properties():
    rng = Rng(21)
    perm = rng.permutation(257)
    assert sorted(perm.tolist()) == list(range(257))
    assert np.array_equal(Rng(21).permutation(257), perm)
    assert not np.array_equal(Rng(22).permutation(257), perm)
    assert Rng(1).permutation(0).size == 0
    assert Rng(1).permutation(1).tolist() == [0]


def test_shuffled_returns_new_list():
    items = ["c", "a", "b"]
    result = Rng(3).shuffled(items)
    assert sorted(result) == sorted(items)
    assert items == ["c", "a", "b"]


def test_normal_moments_and_determinism():
    draws = Rng(17).normal(200_001)  # odd length exercises the pair trim
    assert abs(draws.mean()) < 0.01
    assert abs(draws.std() - 1.0) < 0.01
    assert np.array_equal(Rng(17).normal(101), draws[:101])
    assert Rng(17).normal(0).size == 0
