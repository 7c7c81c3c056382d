import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_rank_vector, brute_supports, brute_topk
from topkfi.dataset import TransactionDataset
from topkfi.errors import DataError, ParameterError, ResourceLimitError
from topkfi.miner import CountTable, count_itemsets, enumerate_itemsets, rank_frequency, top_k
from topkfi.schedule import universe_count


def test_enumerate_small():
    assert enumerate_itemsets((1, 2, 3), 2) == [(1,), (2,), (3,), (1, 2), (1, 3), (2, 3)]


def test_enumerate_w_exceeds_length():
    assert enumerate_itemsets((7,), 3) == [(7,)]


def test_enumerate_count():
    assert len(enumerate_itemsets(tuple(range(10)), 2)) == 55


def test_enumerate_guard():
    with pytest.raises(ResourceLimitError):
        enumerate_itemsets(tuple(range(30)), 3, guard=1000)


def test_count_hand_example():
    t = count_itemsets(TransactionDataset(((1, 2), (1,))), 2)
    assert t.entries == {(1,): 2, (2,): 1, (1, 2): 1}
    assert t.total == 2


def test_count_copies():
    t = count_itemsets([(0, 3, 5)] * 7, 3)
    assert set(t.entries) == set(enumerate_itemsets((0, 3, 5), 3))
    assert set(t.entries.values()) == {7}


def test_count_empty_errors():
    with pytest.raises(DataError):
        count_itemsets([], 2)


def test_count_guard_over_collection():
    with pytest.raises(ResourceLimitError):
        count_itemsets([tuple(range(20))] * 3 + [tuple(range(1, 21))], 2, guard=300)


def _random_txs(rng, n, N):
    return [tuple(sorted(rng.sample(range(n), rng.randint(0, n)))) for _ in range(N)]


@pytest.mark.parametrize("seed", range(10))
def test_count_matches_membership_scan(seed):
    rng = random.Random(seed)
    txs = _random_txs(rng, 6, 20)
    table = count_itemsets(txs, 3)
    oracle = {x: s for x, s in brute_supports(txs, 6, 3).items() if s}
    assert table.entries == oracle


def test_top_k_ties_included():
    t = count_itemsets([(0,), (1,)], 1)
    res = top_k(t, 1, 1, 2)
    assert set(res.itemsets) == {(0,), (1,)}
    assert res.threshold == 0.5


def test_top_k_single():
    res = top_k(count_itemsets([(1,)], 1), 1, 1, 2)
    assert res.pairs() == [((1,), 1.0)]


def test_top_k_deficient():
    res = top_k(count_itemsets([(0, 1)], 1), 5, 1, 10)
    assert res.deficient and res.threshold_support == 0
    assert set(res.itemsets) == {(0,), (1,)}


def test_top_k_K_exceeds_m():
    with pytest.raises(ParameterError):
        top_k(count_itemsets([(0, 1)], 2), 4, 2, 2)


def test_top_k_canonical_order():
    t = count_itemsets([(0, 1), (1, 2), (1,), (2,)], 1)
    res = top_k(t, 3, 1, 3)
    assert res.itemsets == ((1,), (2,), (0,))


def test_top_k_json_shape():
    d = top_k(count_itemsets([(0, 1), (1,)], 2), 1, 2, 2).to_dict()
    assert d["itemsets"] == [{"items": [1], "frequency": 1.0}]
    assert d["threshold"] == 1.0 and d["deficient"] is False


def test_rank_frequency_zero_tail():
    t = CountTable({(0,): 3, (1,): 2, (2,): 1}, 4, 1)
    assert rank_frequency(t, 5, 10) == 0
    assert rank_frequency(t, 1, 10) == Fraction(3, 4)
    with pytest.raises(ParameterError):
        rank_frequency(t, 11, 10)
    with pytest.raises(ParameterError):
        rank_frequency(t, 0, 10)


@pytest.mark.parametrize("seed", range(8))
def test_rank_frequency_matches_full_sort(seed):
    rng = random.Random(100 + seed)
    n, w = 7, 2
    txs = _random_txs(rng, n, 15)
    m = universe_count(n, w)
    table = count_itemsets(txs, w)
    assert [rank_frequency(table, r, m) for r in range(1, m + 1)] == brute_rank_vector(txs, n, w)


@pytest.mark.parametrize("seed", range(8))
def test_top_k_matches_brute(seed):
    rng = random.Random(200 + seed)
    n, w = 6, 3
    txs = _random_txs(rng, n, 12)
    K = rng.randint(1, 20)
    res = top_k(count_itemsets(txs, w), K, w, n)
    expected = brute_topk(txs, n, w, K)
    if res.deficient:
        assert set(res.itemsets) == {x for x in expected}
    else:
        assert {x: res.exact_frequency(x) for x in res.itemsets} == expected


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sets(st.integers(0, 7), max_size=5).map(lambda s: tuple(sorted(s))), min_size=1, max_size=25),
       st.integers(1, 15), st.randoms())
def test_top_k_permutation_invariant_and_tie_closed(txs, K, rnd):
    w, n = 2, 8
    a = top_k(count_itemsets(txs, w), K, w, n)
    shuffled = list(txs)
    rnd.shuffle(shuffled)
    b = top_k(count_itemsets(shuffled, w), K, w, n)
    assert a == b
    table = count_itemsets(txs, w)
    for x, s in table.entries.items():
        if s >= a.threshold_support and s > 0:
            assert x in a


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sets(st.integers(0, 9), max_size=4).map(lambda s: tuple(sorted(s))), min_size=1, max_size=20))
def test_rank_frequency_non_increasing(txs):
    table = count_itemsets(txs, 2)
    m = universe_count(10, 2)
    vals = [rank_frequency(table, r, m) for r in range(1, m + 1)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_merge_is_commutative():
    a = count_itemsets([(0, 1), (1,)], 2)
    b = count_itemsets([(1, 2)], 2)
    assert a.merge(b) == b.merge(a) == count_itemsets([(0, 1), (1,), (1, 2)], 2)
