import csv
import io

import pytest

from topkfi.dataset import TransactionDataset, gen_planted_dataset, gen_zipf_dataset
from topkfi.evaluation import bucket_deviation_holds, count_itemsets, rate_at_least, rate_at_most, verify_approximation
from topkfi.miner import CountTable, top_k
from topkfi.progressive import (
    EXHAUSTED_DATASET,
    HIT_BOUND,
    STOPPED_EARLY,
    bucketize,
    run_progressive,
    stopping_condition,
)
from topkfi.schedule import ApproxParams, PhaseSchedule


def small_schedule(K=2, eps=0.1):
    # n=5, w=2 -> m=15; for K=2 at j=0 the buckets are [1,2] and [3,15]
    return PhaseSchedule.build(ApproxParams(K, 2, eps, 0.1), 5, 10**6)


def test_bucketize_example():
    s = small_schedule()
    assert s.buckets(0).h == 1
    assert bucketize(CountTable({}, 1, 2), s, 0) == [(1, 2), (3, 15)]


@pytest.mark.parametrize("j", range(4))
def test_bucketize_partitions_ranks(j):
    s = PhaseSchedule.build(ApproxParams(3, 2, 0.1, 0.1), 30, 10**6)
    iv = bucketize(CountTable({}, 1, 2), s, j)
    assert iv[0][0] == 1 and iv[-1][1] == s.m
    assert all(a[1] + 1 == b[0] for a, b in zip(iv, iv[1:]))


def test_stopping_condition_single_bucket():
    s = small_schedule()
    # f^(2) = 8/10, f^(3) = 5/10 -> gap 0.3 > 2 eps
    t = CountTable({(0,): 9, (1,): 8, (2,): 5}, 10, 2)
    ok, margins = stopping_condition(t, s, 0)
    assert ok and margins == pytest.approx((0.1,))
    # f^(3) = 6/10 -> gap exactly 2 eps: strict inequality fails
    t = CountTable({(0,): 9, (1,): 8, (2,): 6}, 10, 2)
    ok, margins = stopping_condition(t, s, 0)
    assert not ok and margins[0] == 0.0


def test_stopping_condition_equal_frequencies_never_stops():
    s = PhaseSchedule.build(ApproxParams(1, 1, 0.1, 0.1), 3, 10**6)
    t = count_itemsets([(0, 1, 2)] * 20, 1)
    ok, margins = stopping_condition(t, s, 0)
    assert not ok
    assert margins == pytest.approx(tuple(-(i + 1) * 0.1 for i in range(1, s.buckets(0).h + 1)))


def planted_setup():
    # K = C(3,1) + C(3,2) = 6 itemsets inside the wide transaction; j_max = 1 so phase 0 is designed
    p = ApproxParams(6, 2, 0.1, 0.1)
    ds = gen_planted_dataset(ell=3, n=40_000, N=100_000)
    return p, ds, PhaseSchedule.build(p, ds.universe_size, len(ds))


def test_planted_design_parameters():
    p, ds, s = planted_setup()
    j = 0
    assert s.j_max > j
    p_K = (s.buckets(j).h + 1) * p.eps + p.eps / 2 + 1 / s.phase_size(j)
    assert p_K < 1
    assert 100_000 / len(ds) > p_K


def test_stopping_condition_planted_sample():
    p, ds, s = planted_setup()
    out = run_progressive(ds, p, seed=3, keep_tables=True)
    table = out.trace[0].table
    h = s.buckets(0).h
    # top-K frequencies exceed every other by more than (h+1) eps + 1/t_0
    fK = sorted(table.entries.values(), reverse=True)[p.K - 1] / table.total
    rest = max(v for x, v in table.entries.items() if not set(x) <= {0, 1, 2}) / table.total
    assert fK - rest > (h + 1) * p.eps + 1 / s.phase_size(0)
    assert stopping_condition(table, s, 0)[0]


def test_run_progressive_stops_early_on_planted():
    p, ds, s = planted_setup()
    out = run_progressive(ds, p, seed=11)
    assert out.terminal == STOPPED_EARLY and out.stop_phase == 0
    assert out.last.stopped and out.stop_phase < s.j_max
    assert set(out.result.itemsets) == {(0,), (1,), (2,), (0, 1), (0, 2), (1, 2)}
    assert verify_approximation(out.result, count_itemsets(ds, 2), p, ds.universe_size).ok


def test_run_progressive_exhausts_small_dataset():
    ds = gen_zipf_dataset(8, 300, seed=2)
    p = ApproxParams(3, 2, 0.1, 0.1)
    out = run_progressive(ds, p, seed=0)
    assert out.schedule.bound == len(ds) and out.schedule.j_max == 0
    assert out.terminal == EXHAUSTED_DATASET
    assert out.result == top_k(count_itemsets(ds, 2), 3, 2, ds.universe_size)
    assert out.sample_size == len(ds)


def test_run_progressive_hits_bound():
    ds = gen_zipf_dataset(30, 12_000, seed=5)
    p = ApproxParams(5, 1, 0.1, 0.1)
    out = run_progressive(ds, p, seed=1)
    assert out.schedule.bound < len(ds)
    assert out.terminal == HIT_BOUND and out.sample_size == out.schedule.bound


def test_run_progressive_deterministic():
    ds = gen_zipf_dataset(12, 3000, seed=8)
    ds = TransactionDataset(ds.transactions, 40_000)
    p = ApproxParams(6, 2, 0.2, 0.1)
    a = run_progressive(ds, p, seed=42)
    b = run_progressive(ds, p, seed=42)
    assert a.to_dict() == b.to_dict()


def test_trace_invariants_and_csv():
    p, ds, s = planted_setup()
    out = run_progressive(ds, p, seed=5)
    for t in out.trace:
        assert t.stopped == all(m > 0 for m in t.margins)
    rows = list(csv.DictReader(io.StringIO(out.trace_csv())))
    assert list(rows[0]) == ["j", "sample_size", "stopped", "min_margin", "elapsed_ms"]
    assert int(rows[0]["sample_size"]) == s.phase_size(0)


def test_geometric_and_extend_options():
    ds = TransactionDataset(gen_zipf_dataset(12, 4000, seed=8).transactions, 40_000)
    p = ApproxParams(6, 2, 0.2, 0.1)
    g = run_progressive(ds, p, seed=1, geometric_factor=1.5)
    assert g.schedule.geometric_factor == 1.5
    for t in g.trace[:-1]:
        assert t.sample_size == g.schedule.phase_size(t.j)
    e = run_progressive(ds, p, seed=1, extend=True, keep_tables=True)
    sizes = [t.sample_size for t in e.trace]
    assert sizes == sorted(sizes)


def multiphase_setup():
    base = gen_zipf_dataset(10, 3000, seed=21, scale=0.6, exponent=1.0)
    ds = TransactionDataset(base.transactions, 40_000)
    p = ApproxParams(6, 2, 0.2, 0.1)
    return ds, p


def test_multiphase_setup_has_several_phases():
    ds, p = multiphase_setup()
    assert PhaseSchedule.build(p, ds.universe_size, len(ds)).j_max >= 1


@pytest.mark.slow
def test_bucket_deviation_rate_and_guarantee():
    ds, p = multiphase_setup()
    truth = count_itemsets(ds, p.w)
    runs = 200
    dev_fail = approx_ok = 0
    for seed in range(runs):
        out = run_progressive(ds, p, seed=seed, keep_tables=True)
        dev_fail += not bucket_deviation_holds(out, truth)
        approx_ok += verify_approximation(out.result, truth, p, ds.universe_size).ok
    assert rate_at_most(dev_fail, runs, p.delta, 0.01)
    assert rate_at_least(approx_ok, runs, 1 - p.delta, 0.01)
