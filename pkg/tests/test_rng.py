"""Counter-based generator: known answers, addressing, and substreams."""

import numpy as np

from blightpipe.rng import CounterRng, substream_seed

# Published first outputs of this mixing function for seed 0 with the
# standard increment; pins the algorithm, not just self-consistency.
SEED0_OUTPUTS = (
    0xE220A8397B1DCDAF,
    0x6E789E6AA1B965F4,
    0x06C45D188009454F,
    0xF88BB8A8724C81EC,
)


def test_known_answer_seed_zero():
    rng = CounterRng(0)
    assert tuple(rng.next_u64() for _ in range(4)) == SEED0_OUTPUTS


def test_vectorized_matches_scalar():
    rng_a = CounterRng(123456789)
    scalars = [rng_a.uniform() for _ in range(100)]
    rng_b = CounterRng(123456789)
    assert np.array_equal(rng_b.uniform_array(100), np.array(scalars))


def test_counter_random_access():
    rng = CounterRng(42)
    sequence = [rng.next_u64() for _ in range(10)]
    rng.jump_to(7)
    assert rng.next_u64() == sequence[7]
    rng.jump_to(0)
    assert rng.next_u64() == sequence[0]


def test_uniform_open_interval():
    values = CounterRng(9).uniform_array(10_000)
    assert values.min() > 0.0
    assert values.max() < 1.0


def test_uniform_mean_sane():
    values = CounterRng(77).uniform_array(50_000)
    assert abs(values.mean() - 0.5) < 0.01


def test_randbelow_bounds_and_coverage():
    rng = CounterRng(5)
    draws = [rng.randbelow(5) for _ in range(2000)]
    assert set(draws) == {0, 1, 2, 3, 4}


def test_shuffle_is_permutation_and_deterministic():
    items = np.arange(50)
    a = items.copy()
    CounterRng(31).shuffle(a)
    b = items.copy()
    CounterRng(31).shuffle(b)
    assert np.array_equal(a, b)
    assert sorted(a.tolist()) == items.tolist()
    assert not np.array_equal(a, items)  # astronomically unlikely to be identity


def test_streams_are_independent():
    base = CounterRng(1000, stream=0)
    other = CounterRng(1000, stream=1)
    a = base.uniform_array(64)
    b = other.uniform_array(64)
    assert not np.array_equal(a, b)


def test_substream_seed_distinct():
    seeds = {substream_seed(11, i) for i in range(1000)}
    assert len(seeds) == 1000


def test_substream_seed_deterministic():
    assert substream_seed(3, 5) == substream_seed(3, 5)
    assert substream_seed(3, 5) != substream_seed(4, 5)
