import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wslsim.core import (
    LINK_G,
    LINK_P,
    LINK_R,
    DiscretePmf,
    DuplicateRate,
    EmptySupport,
    NegativeProb,
    NonMonotonicSlot,
    NonPositiveRate,
    ProbSumMismatch,
    RandomStream,
    RateWindow,
    ShortFlow,
    ZeroRate,
    keyed_uniform,
    pmf_sample,
    pmf_validate,
    stream_key,
    truncated_exp_from_uniform,
    truncated_exp_size,
    truncated_poisson_from_uniform,
    truncated_poisson_sample,
    window_max_update,
    workload_of,
)

N = 10**6


def uniforms(n, seed=0):
    key = stream_key(seed, 0, 0)
    return np.array([keyed_uniform(key, j) for j in range(n)])


@pytest.fixture(scope="module")
def million():
    return uniforms(N, seed=12345)


# -- pmfs ---------------------------------------------------------------------


def test_builtin_links():
    assert LINK_G.rates == (10, 20, 30, 40, 50)
    assert LINK_G.max_rate() == 50 and LINK_G.p_at_max() == pytest.approx(0.2)
    assert LINK_P.rates == (5, 10, 15, 20, 25)
    assert LINK_R.rates == (10, 20, 30, 40, 100)
    assert LINK_R.probs == (0.5, 0.2, 0.2, 0.09, 0.01)


def test_pmf_validation_errors():
    p = pmf_validate([(100, 1.0)])
    assert p.max_rate() == 100 and p.p_at_max() == 1.0
    with pytest.raises(ProbSumMismatch):
        pmf_validate([(10, 0.5), (20, 0.6)])
    with pytest.raises(EmptySupport):
        pmf_validate([])
    with pytest.raises(NonPositiveRate):
        pmf_validate([(0, 1.0)])
    with pytest.raises(NegativeProb):
        pmf_validate([(5, -0.5), (6, 1.5)])
    with pytest.raises(DuplicateRate):
        pmf_validate([(5, 0.5), (5, 0.5)])


def test_pmf_sorted_and_idempotent():
    p = pmf_validate([(30, 0.3), (10, 0.7)])
    assert p.rates == (10, 30)
    assert pmf_validate(p.outcomes()) == p


@given(st.lists(st.floats(0.01, 10), min_size=1, max_size=8))
def test_pmf_invariants(weights):
    total = math.fsum(weights)
    p = pmf_validate([(10 * (i + 1), w / total) for i, w in enumerate(weights)])
    assert abs(math.fsum(p.probs) - 1.0) <= 1e-12
    assert all(a < b for a, b in zip(p.rates, p.rates[1:]))
    assert p.cdf[-1] == 1.0


def test_degenerate_sample():
    p = pmf_validate([(25, 1.0)])
    rng = RandomStream(3)
    assert {pmf_sample(p, rng) for _ in range(1000)} == {25}


def test_g_link_frequencies(million):
    idx = np.searchsorted(np.array(LINK_G.cdf), million, side="right")
    freq = np.bincount(idx, minlength=5) / N
    assert np.all(np.abs(freq - 0.2) < 0.005)


def test_r_link_best_rate_frequency(million):
    idx = np.searchsorted(np.array(LINK_R.cdf), million, side="right")
    assert abs(np.mean(idx == 4) - 0.01) < 0.002


def test_pmf_sample_matches_kernel_sampler():
    from wslsim.kernels import sample_level

    rng = RandomStream(9)
    cdf = np.array(LINK_R.cdf)
    for _ in range(2000):
        u = rng.copy().random()
        assert pmf_sample(LINK_R, rng) == LINK_R.rates[sample_level(u, cdf, 5)]


# -- random streams -----------------------------------------------------------


def test_stream_reproducible():
    a, b = RandomStream(42), RandomStream(42)
    assert [a.next_u64() for _ in range(100)] == [b.next_u64() for _ in range(100)]
    c = RandomStream(43)
    assert [RandomStream(42).random() for _ in range(3)] != [c.random() for _ in range(3)]


def test_for_slot_matches_keyed_uniform():
    rng = RandomStream.for_slot(7, 11, 2)
    key = stream_key(7, 11, 2)
    assert [rng.random() for _ in range(50)] == [keyed_uniform(key, j) for j in range(50)]


def test_splitmix_reference_value():
    # first output of the reference SplitMix64 generator seeded with 0
    rng = RandomStream.__new__(RandomStream)
    rng._state = 0
    assert rng.next_u64() == 0xE220A8397B1DCDAF


def test_choice_index_bounds():
    rng = RandomStream(5)
    assert all(0 <= rng.choice_index(3) < 3 for _ in range(1000))


# -- workload -----------------------------------------------------------------


@pytest.mark.parametrize("q,r,w", [(30, 50, 1), (150, 10, 15), (101, 50, 3)])
def test_workload_examples(q, r, w):
    assert workload_of(q, r) == w


@given(st.integers(1, 10**6), st.integers(1, 1000))
def test_workload_is_ceiling(q, r):
    assert workload_of(q, r) == math.ceil(q / r) == -(-q // r)


def test_workload_zero_rate():
    with pytest.raises(ZeroRate):
        workload_of(5, 0)


# -- truncated samplers -------------------------------------------------------


def truncated_poisson_pmf(mean, cap):
    pmf = [math.exp(-mean) * mean**k / math.factorial(k) for k in range(cap)]
    return pmf + [1.0 - math.fsum(pmf)]


def test_poisson_small_mean(million):
    draws = np.array([truncated_poisson_from_uniform(u, 0.1, 100) for u in million[:200_000]])
    assert draws.max() <= 100
    # P(0) against the closed form
    assert abs(np.mean(draws == 0) - math.exp(-0.1)) < 0.002


def test_poisson_caps():
    rng = RandomStream(1)
    assert max(truncated_poisson_sample(1.0, 10, rng) for _ in range(20000)) <= 10
    ones = [truncated_poisson_sample(1.0, 1, rng) for _ in range(100_000)]
    assert set(ones) <= {0, 1}
    assert abs(np.mean(ones) - (1 - math.exp(-1))) < 0.005


def test_poisson_total_variation(million):
    mean, cap = 3.0, 6
    draws = np.array([truncated_poisson_from_uniform(u, mean, cap) for u in million])
    emp = np.bincount(draws, minlength=cap + 1) / N
    tv = 0.5 * np.abs(emp - np.array(truncated_poisson_pmf(mean, cap))).sum()
    assert tv < 0.005


def test_exp_size_range_and_tail(million):
    sizes = np.array([truncated_exp_from_uniform(u, 30.0, 150) for u in million])
    assert sizes.min() >= 1 and sizes.max() <= 150
    assert abs(np.mean(sizes == 150) - math.exp(-5)) < 0.001


def test_exp_size_tiny_mean():
    rng = RandomStream(2)
    sizes = [truncated_exp_size(0.1, 150, rng) for _ in range(10000)]
    assert Counter(sizes)[1] > 9990


def test_exp_size_rounding_cells():
    # u such that the raw draw is exactly 2.5 rounds half-up to 3
    u = 1 - math.exp(-2.5 / 30)
    assert truncated_exp_from_uniform(u + 1e-12, 30, 150) == 3
    assert truncated_exp_from_uniform(0.0, 30, 150) == 1


# -- learning window ----------------------------------------------------------


def test_window_examples():
    kept, best = window_max_update([(5, 3), (6, 5), (7, 2)], (8, 4), 2)
    assert [s for s, _ in kept] == [6, 7, 8] and best == 5
    assert window_max_update([], (4, 17), 3)[1] == 17
    kept, best = window_max_update([(0, 100)], (16, 10), 16)
    assert (0, 100) in kept and best == 100
    assert window_max_update([(0, 100)], (17, 10), 16)[1] == 10


def test_window_rejects_old_slots():
    w = RateWindow(4)
    w.push(3, 10)
    with pytest.raises(NonMonotonicSlot):
        w.push(3, 20)
    with pytest.raises(NonMonotonicSlot):
        window_max_update([(5, 1)], (5, 2), 3)


observation_streams = st.lists(
    st.tuples(st.integers(1, 3), st.integers(1, 60)), min_size=1, max_size=80
)


@given(observation_streams, st.one_of(st.none(), st.integers(0, 20)))
def test_window_matches_brute_force(steps, D):
    w = RateWindow(D)
    history = []
    functional = []
    t = 0
    prev = 0
    for gap, rate in steps:
        t += gap
        history.append((t, rate))
        got = w.push(t, rate)
        functional, fbest = window_max_update(functional, (t, rate), D)
        lo = -math.inf if D is None else t - D
        assert got == fbest == max(r for s, r in history if s >= lo)
        if D is None:
            assert got >= prev
        prev = got


def test_short_flow_capped_age():
    f = ShortFlow(1, 0, 0, 30, 30, LINK_G, age=200)
    assert f.capped_age(100) == 100 and f.capped_age(10**6) == 200
    assert f.true_max == 50
