"""Progressive sampling driver with a rank-gap stopping condition.

Phase ``j`` mines a fresh sample of ``t_j`` transactions and stops when the
K-th sample frequency beats the frequency at rank ``S_j(i-1)+1`` by more
than ``(i+1)*eps`` for every bucket ``i = 1..h(j)``. If no phase before
``j_max`` stops, the last phase mines a sample of size ``bound`` (or the
whole dataset when the bound reaches ``|D|``).
"""

from __future__ import annotations

import csv
import io
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .dataset import Transaction, TransactionDataset, draw_sample, make_rng
from .errors import ParameterError
from .miner import DEFAULT_GUARD, CountTable, TopKResult, count_itemsets, rank_support, top_k
from .schedule import ApproxParams, PhaseSchedule

STOPPED_EARLY = "stopped_early"
HIT_BOUND = "hit_bound"
EXHAUSTED_DATASET = "exhausted_dataset"


@dataclass
class PhaseTrace:
    """What happened in one phase.

    ``stopped`` records whether the stopping condition held on the phase's
    sample; it is evaluated on the final fallback phase too, for diagnostics.
    """

    j: int
    sample_size: int
    stopped: bool
    margins: tuple[float, ...]
    elapsed_ms: float = 0.0
    exact_margins: tuple[float, ...] | None = None
    sketch: dict | None = None
    table: CountTable | None = field(default=None, repr=False)

    @property
    def min_margin(self) -> float | None:
        return min(self.margins) if self.margins else None

    def to_dict(self, timings: bool = False) -> dict:
        d = {
            "j": self.j,
            "sample_size": self.sample_size,
            "stopped": self.stopped,
            "margins": list(self.margins),
        }
        if self.exact_margins is not None:
            d["exact_margins"] = list(self.exact_margins)
        if self.sketch is not None:
            d["sketch"] = self.sketch
        if timings:
            d["elapsed_ms"] = self.elapsed_ms
        return d


@dataclass
class MiningOutcome:
    result: TopKResult
    trace: list[PhaseTrace]
    terminal: str
    schedule: PhaseSchedule

    @property
    def last(self) -> PhaseTrace:
        return self.trace[-1]

    @property
    def stop_phase(self) -> int:
        return self.trace[-1].j

    @property
    def sample_size(self) -> int:
        return self.trace[-1].sample_size

    def to_dict(self, timings: bool = False) -> dict:
        return {
            "terminal": self.terminal,
            "stop_phase": self.stop_phase,
            "sample_size": self.sample_size,
            "schedule": self.schedule.to_dict(),
            "result": self.result.to_dict(),
            "trace": [p.to_dict(timings) for p in self.trace],
        }

    def trace_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["j", "sample_size", "stopped", "min_margin", "elapsed_ms"])
        for p in self.trace:
            mm = p.min_margin
            wr.writerow([p.j, p.sample_size, int(p.stopped), "" if mm is None else repr(mm), f"{p.elapsed_ms:.3f}"])
        return buf.getvalue()


def _rank_gap_margins(fK_support: int, total: int, schedule: PhaseSchedule, j: int, support_at) -> tuple[bool, tuple[float, ...]]:
    """Evaluate ``fK - f(S(i-1)+1) > (i+1) eps`` exactly for i = 1..h(j).

    ``support_at(rank)`` returns the support (or an upper bound on it) at a rank.
    """
    eps = schedule.params.eps_exact
    b = schedule.buckets(j)
    ok = True
    margins = []
    for i in range(1, b.h + 1):
        rank = b.prefix(i - 1) + 1
        gap = Fraction(fK_support - support_at(rank), total) - (i + 1) * eps
        ok = ok and gap > 0
        margins.append(float(gap))
    return ok, tuple(margins)


def stopping_condition(table: CountTable, schedule: PhaseSchedule, j: int) -> tuple[bool, tuple[float, ...]]:
    """Check the phase-j stopping condition on a sample's count table.

    Returns ``(satisfied, margins)`` where ``margins[i-1]`` is
    ``f^(K) - f^(S_j(i-1)+1) - (i+1) eps``. Ranks past the table's
    non-zero entries have frequency zero.
    """
    m, K = schedule.m, schedule.params.K
    if K > m:
        raise ParameterError(f"K={K} exceeds m={m}")
    fK = rank_support(table, K, m)
    return _rank_gap_margins(fK, table.total, schedule, j, lambda r: rank_support(table, r, m))


def bucketize(ground_truth: CountTable, schedule: PhaseSchedule, j: int) -> list[tuple[int, int]]:
    """Rank intervals ``[S_j(i-1)+1, S_j(i)]`` clipped to ``[1, m]`` for i = 0..h(j).

    Ranks refer to the canonical order of ``ground_truth``; look them up
    with ``ground_truth.canonical`` (ranks past its length are zero-frequency
    itemsets).
    """
    b = schedule.buckets(j)
    m = schedule.m
    out = []
    for i in range(b.h + 1):
        lo = b.prefix(i - 1) + 1
        hi = min(b.S[i], m)
        if lo <= hi:
            out.append((lo, hi))
    return out


# evaluate(table, sample, j, rng) -> (satisfied, margins, extras)
Evaluator = Callable[[CountTable, Sequence[Transaction], int, np.random.Generator], tuple[bool, tuple, dict]]


def drive(
    dataset: TransactionDataset,
    schedule: PhaseSchedule,
    seed: int,
    evaluate: Evaluator,
    *,
    extend: bool = False,
    guard: int = DEFAULT_GUARD,
    keep_tables: bool = False,
    on_phase: Callable[[PhaseTrace], None] | None = None,
) -> MiningOutcome:
    """Phase loop shared by the exact and the count-min variants."""
    dataset.require_nonempty()
    params = schedule.params
    sample_ss, aux_ss = np.random.SeedSequence(seed).spawn(2)
    rng = make_rng(sample_ss)
    aux = make_rng(aux_ss)
    trace: list[PhaseTrace] = []
    prev: tuple[Transaction, ...] = ()

    def next_sample(size: int) -> tuple[Transaction, ...]:
        nonlocal prev
        if extend and len(prev) <= size:
            s = prev + draw_sample(dataset, size - len(prev), rng)
        else:
            s = draw_sample(dataset, size, rng)
        prev = s
        return s

    def phase(j: int, sample: Sequence[Transaction]):
        t0 = time.perf_counter()
        table = count_itemsets(sample, params.w, guard)
        ok, margins, extras = evaluate(table, sample, j, aux)
        p = PhaseTrace(
            j, len(sample), ok, margins,
            exact_margins=extras.get("exact_margins"),
            sketch=extras.get("sketch"),
            table=table if keep_tables else None,
        )
        p.elapsed_ms = (time.perf_counter() - t0) * 1e3
        trace.append(p)
        if on_phase is not None:
            on_phase(p)
        return table, ok

    for j in range(schedule.j_max):
        table, ok = phase(j, next_sample(schedule.phase_size(j)))
        if ok:
            res = top_k(table, params.K, params.w, schedule.universe_size)
            return MiningOutcome(res, trace, STOPPED_EARLY, schedule)

    if schedule.bound < len(dataset):
        sample, terminal = next_sample(schedule.bound), HIT_BOUND
    else:
        sample, terminal = dataset.transactions, EXHAUSTED_DATASET
    table, _ = phase(schedule.j_max, sample)
    res = top_k(table, params.K, params.w, schedule.universe_size)
    return MiningOutcome(res, trace, terminal, schedule)


def run_progressive(
    dataset: TransactionDataset,
    params: ApproxParams,
    seed: int,
    schedule: PhaseSchedule | None = None,
    *,
    geometric_factor: float = 1.0,
    extend: bool = False,
    guard: int = DEFAULT_GUARD,
    keep_tables: bool = False,
    on_phase: Callable[[PhaseTrace], None] | None = None,
) -> MiningOutcome:
    """Progressive sampling with exact per-sample counting.

    With ``extend=True`` each phase tops up the previous sample instead of
    drawing a fresh one. That is cheaper but phases are no longer
    independent, which the correctness argument assumes.
    """
    if schedule is None:
        schedule = PhaseSchedule.build(params, dataset.universe_size, len(dataset), geometric_factor)

    def evaluate(table, sample, j, rng):
        ok, margins = stopping_condition(table, schedule, j)
        return ok, margins, {}

    return drive(dataset, schedule, seed, evaluate, extend=extend, guard=guard,
                 keep_tables=keep_tables, on_phase=on_phase)
