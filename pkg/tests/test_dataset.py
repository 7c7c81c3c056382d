from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from topkfi.dataset import (
    SampleSpec,
    TransactionDataset,
    gen_lowerbound_dataset,
    gen_planted_dataset,
    gen_zipf_dataset,
    parse_fimi,
    sample_with_replacement,
    write_fimi,
)
from topkfi.errors import DataError, ParameterError
from topkfi.schedule import universe_count


def test_parse_basic():
    ds = parse_fimi("1 2 3\n2 3\n")
    assert ds.transactions == ((1, 2, 3), (2, 3))
    assert ds.universe_size == 4


def test_parse_dedups_and_sorts():
    assert parse_fimi("5 5 1\n").transactions == ((1, 5),)


def test_parse_skips_blank_lines():
    assert len(parse_fimi("1\n\n   \n2\n")) == 2


def test_parse_bad_token_names_line():
    with pytest.raises(DataError, match="line 2"):
        parse_fimi("1 2\n3 x\n")


@pytest.mark.parametrize("text", ["", "\n\n"])
def test_parse_empty_input(text):
    with pytest.raises(DataError):
        parse_fimi(text)


def test_parse_declared_universe():
    assert parse_fimi("0 1\n", universe_size=10).universe_size == 10
    with pytest.raises(DataError):
        parse_fimi("0 11\n", universe_size=10)


def test_write_fimi():
    assert write_fimi(TransactionDataset(((1, 2),))) == "1 2\n"


def test_write_empty_dataset_fails():
    with pytest.raises(DataError):
        write_fimi(TransactionDataset(()))


def test_unsorted_transaction_rejected():
    with pytest.raises(DataError):
        TransactionDataset(((2, 1),))


transactions = st.lists(
    st.sets(st.integers(0, 40), min_size=1, max_size=8).map(lambda s: tuple(sorted(s))), min_size=1, max_size=30
)


@given(transactions)
def test_fimi_round_trip(txs):
    ds = TransactionDataset(tuple(txs))
    assert parse_fimi(write_fimi(ds)) == ds


def test_sample_single_transaction_forced():
    ds = TransactionDataset(((3, 4),))
    s = sample_with_replacement(ds, SampleSpec(5, 0))
    assert s.transactions == ((3, 4),) * 5


def test_sample_deterministic_and_keeps_universe():
    ds = gen_zipf_dataset(20, 200, seed=1)
    a = sample_with_replacement(ds, SampleSpec(50, 9))
    b = sample_with_replacement(ds, SampleSpec(50, 9))
    assert a == b and len(a) == 50 and a.universe_size == ds.universe_size
    assert a != sample_with_replacement(ds, SampleSpec(50, 10))


def test_sample_empty_dataset_errors():
    with pytest.raises(DataError):
        sample_with_replacement(TransactionDataset(()), SampleSpec(3, 0))


def test_sample_spec_size_positive():
    with pytest.raises(ParameterError):
        SampleSpec(0, 1)


@pytest.mark.parametrize("seed", range(5))
def test_sample_balanced_two_transactions(seed):
    ds = TransactionDataset(((1,), (2,)))
    c = Counter(sample_with_replacement(ds, SampleSpec(10_000, seed)).transactions)
    # binomial(10000, 0.5): sd = 50, so +-300 is a 6 sd band
    assert abs(c[(1,)] - 5000) <= 300


def test_sample_matches_multiplicities_chi_square():
    ds = TransactionDataset(((1,), (1,), (1,), (2,), (2,), (3,)))
    draws = [sample_with_replacement(ds, SampleSpec(1, s)).transactions[0] for s in range(12_000)]
    c = Counter(draws)
    observed = [c[(1,)], c[(2,)], c[(3,)]]
    expected = [6000, 4000, 2000]
    assert stats.chisquare(observed, expected).pvalue > 0.001


def _item_freq(ds, item):
    return sum(item in t for t in ds.transactions) / len(ds)


def test_lowerbound_generator_frequencies():
    ds = gen_lowerbound_dataset(K=2, ell=3, p_K=0.3, eps=0.05, N=100_000, seed=4)
    assert ds.universe_size == 5
    assert abs(_item_freq(ds, 0) - 0.3) <= 0.005
    assert abs(_item_freq(ds, 2) - 0.2) <= 0.005
    # 4 sd bands for every item
    for i, p in enumerate([0.3, 0.3, 0.2, 0.2, 0.2]):
        sd = np.sqrt(p * (1 - p) / len(ds))
        assert abs(_item_freq(ds, i) - p) <= 4 * sd


def test_lowerbound_generator_keeps_empty_transactions():
    ds = gen_lowerbound_dataset(K=1, ell=1, p_K=0.3, eps=0.05, N=2000, seed=0)
    assert len(ds) == 2000
    assert any(len(t) == 0 for t in ds.transactions)


@pytest.mark.parametrize(
    "p_K,eps,match",
    [(0.3, 0.2, "p_K > 2\\*eps"), (0.95, 0.1, "p_K - p_K\\^2 > eps")],
)
def test_lowerbound_generator_preconditions(p_K, eps, match):
    with pytest.raises(ParameterError, match=match):
        gen_lowerbound_dataset(K=2, ell=3, p_K=p_K, eps=eps, N=10, seed=0)


def test_planted_generator_exact():
    ds = gen_planted_dataset(ell=2, n=4, N=3)
    assert ds.transactions == ((0, 1), (0, 1), (0, 1), (2,), (3,))
    assert ds.universe_size == 4


def test_planted_generator_frequency_and_K():
    ell, n, N = 4, 10, 50
    ds = gen_planted_dataset(ell, n, N)
    assert len(ds) == N + n - ell
    for i in range(ell):
        assert _item_freq(ds, i) == N / (N + n - ell)
    # K = sum_{i<=w} C(ell, i) with w = 2
    assert universe_count(4, 2) == 10


def test_planted_generator_rejects_small_n():
    with pytest.raises(ParameterError):
        gen_planted_dataset(ell=3, n=3, N=5)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 30), st.integers(1, 200), st.integers(0, 2**32))
def test_zipf_generator_shape(n, N, seed):
    ds = gen_zipf_dataset(n, N, seed)
    assert len(ds) == N and ds.universe_size == n
    assert all(t == tuple(sorted(set(t))) for t in ds.transactions)
