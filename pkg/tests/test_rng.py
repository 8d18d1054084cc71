import numpy as np
from hypothesis import given, strategies as st

from schelling_ring.rng import MASK64, SplitMix64, mix64, new_state, next_u64, random_bits, randbelow, stream


def reference_splitmix(seed, count):
    # textbook sequential form
    out, s = [], seed
    for _ in range(count):
        s = (s + 0x9E3779B97F4A7C15) & MASK64
        z = s
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        out.append(z ^ (z >> 31))
    return out


def test_canonical_first_output():
    assert SplitMix64(0).next() == 0xE220A8397B1DCDAF


@given(st.integers(0, MASK64), st.integers(1, 40))
def test_vectorised_stream_matches_sequential(seed, count):
    assert stream(seed, count).tolist() == reference_splitmix(seed, count)


@given(st.integers(0, MASK64))
def test_kernel_state_advances_like_class(seed):
    state = new_state(seed)
    gen = SplitMix64(seed)
    for _ in range(5):
        assert int(next_u64(state)) == gen.next()


def test_randbelow_range_and_spread():
    state = new_state(7)
    draws = np.array([randbelow(state, 10) for _ in range(20000)])
    assert draws.min() == 0 and draws.max() == 9
    counts = np.bincount(draws, minlength=10)
    # 3 sigma around 2000 each
    assert np.all(np.abs(counts - 2000) < 3 * np.sqrt(20000 * 0.1 * 0.9))


def test_random_bits_fair_and_deterministic():
    a = random_bits(3, 100_000)
    assert np.array_equal(a, random_bits(3, 100_000))
    assert abs(a.mean() - 0.5) < 3 * 0.5 / np.sqrt(a.size)
    assert not np.array_equal(a, random_bits(4, 100_000))


def test_mix64_is_bijective_on_sample():
    xs = {mix64(i) for i in range(5000)}
    assert len(xs) == 5000
