"""Count-min filter variant of the progressive stopping condition.

Instead of ranking all ``m`` candidate itemsets, each phase summarises the
sample in a count-min filter of ``c`` counters split into ``k_B`` disjoint
groups, one hash function per group. A second pass over the sample assigns
every occurring itemset to its minimum counter; from the per-counter
support totals we get an upper envelope ``fhat`` of the sample's
rank-frequency curve, and the stopping test runs against that envelope.
"""

from __future__ import annotations

import bisect
import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dataset import Transaction, TransactionDataset
from .errors import ParameterError, ResourceLimitError
from .miner import DEFAULT_GUARD, Itemset, iter_weighted_itemsets, rank_frequency, subsets_count, weighted_transactions
from .progressive import MiningOutcome, PhaseTrace, drive, stopping_condition
from .schedule import ApproxParams, PhaseSchedule, exact

# Carter-Wegman hashing modulo a Mersenne prime; a*key + b stays below 2**63
PRIME = (1 << 31) - 1
_KEY_BASE = 1_000_003

DEFAULT_MAX_COUNTERS = 50_000_000


def itemset_key(x: Iterable[int]) -> int:
    k = 0
    for item in x:
        k = (k * _KEY_BASE + item + 1) % PRIME
    return k


@dataclass(frozen=True)
class CMParams:
    eps_B: float
    delta_B: float
    eps_C: float
    delta_c: float
    C_S: int
    sample_size: int
    k_B: int
    c: int

    @property
    def group_width(self) -> int:
        return self.c // self.k_B

    def to_dict(self) -> dict:
        return {"eps_B": self.eps_B, "delta_B": self.delta_B, "eps_C": self.eps_C, "C_S": self.C_S,
                "k_B": self.k_B, "c": self.c}


def cm_params_from_counts(eps_B: float, delta_B: float, sample_size: int, C_S: int, m: int,
                          max_counters: int = DEFAULT_MAX_COUNTERS) -> CMParams:
    """Filter dimensions that keep every count-min overestimate below eps_B with probability 1 - delta_B."""
    if not 0 < eps_B < 1:
        raise ParameterError(f"eps_B must lie in (0, 1), got {eps_B}")
    if not 0 < delta_B < 1:
        raise ParameterError(f"delta_B must lie in (0, 1), got {delta_B}")
    if sample_size < 1:
        raise ParameterError("sample must be non-empty")
    delta_c = delta_B / m
    k_B = math.ceil(math.log(m) - math.log(delta_B))
    if C_S == 0:
        eps_C = math.inf
        width = 1
    else:
        eps_C = eps_B * sample_size / C_S
        width = math.ceil(math.e / eps_C)
    c = k_B * width
    if c > max_counters:
        raise ResourceLimitError(f"count-min filter needs {c} counters; cap is {max_counters}")
    return CMParams(eps_B, delta_B, eps_C, delta_c, C_S, sample_size, k_B, c)


def cm_params(eps_B: float, delta_B: float, sample: Sequence[Transaction] | TransactionDataset, w: int, m: int,
              max_counters: int = DEFAULT_MAX_COUNTERS) -> CMParams:
    """Size a filter for ``sample``; C_S counts the non-empty subsets of size <= w of every transaction."""
    txs = list(sample)
    C_S = sum(wt * subsets_count(len(t), w) for t, wt in weighted_transactions(txs))
    return cm_params_from_counts(eps_B, delta_B, len(txs), C_S, m, max_counters)


class CountMinFilter:
    """``c`` counters in ``k_B`` groups; group ``i`` owns cells ``[i*c/k_B, (i+1)*c/k_B)``.

    Populate with :meth:`add`, then :meth:`freeze` before querying.
    """

    def __init__(self, c: int, k_B: int, rng: np.random.Generator | int):
        if k_B < 1 or c < k_B or c % k_B:
            raise ParameterError(f"k_B={k_B} must divide c={c} evenly")
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        self.c = c
        self.k_B = k_B
        self.group_width = c // k_B
        self.counters = np.zeros(c, dtype=np.int64)
        self.a = rng.integers(1, PRIME, size=k_B, dtype=np.int64)
        self.b = rng.integers(0, PRIME, size=k_B, dtype=np.int64)
        self._offsets = (np.arange(k_B, dtype=np.int64) * self.group_width)[:, None]
        self.frozen = False

    @classmethod
    def from_params(cls, p: CMParams, rng) -> CountMinFilter:
        return cls(p.c, p.k_B, rng)

    def cells(self, keys: np.ndarray) -> np.ndarray:
        """Counter index of each key under each hash; shape ``(k_B, len(keys))``."""
        keys = np.asarray(keys, dtype=np.int64)
        h = (self.a[:, None] * keys[None, :] + self.b[:, None]) % PRIME
        return h % self.group_width + self._offsets

    def add(self, keys: np.ndarray, weights: np.ndarray | None = None) -> None:
        if self.frozen:
            raise RuntimeError("filter is frozen")
        keys = np.asarray(keys, dtype=np.int64)
        if weights is None:
            weights = np.ones(len(keys), dtype=np.int64)
        cells = self.cells(keys)
        for g in range(self.k_B):
            np.add.at(self.counters, cells[g], weights)

    def freeze(self) -> CountMinFilter:
        self.frozen = True
        return self

    def merge(self, other: CountMinFilter) -> CountMinFilter:
        """Cellwise sum of two filters sharing dimensions and hash seeds."""
        if (self.c, self.k_B) != (other.c, other.k_B) or not (
            np.array_equal(self.a, other.a) and np.array_equal(self.b, other.b)
        ):
            raise ParameterError("filters differ in shape or hash seeds")
        out = CountMinFilter.__new__(CountMinFilter)
        out.__dict__.update(self.__dict__)
        out.counters = self.counters + other.counters
        out.frozen = False
        return out

    def support(self, x: Itemset) -> int:
        if not self.frozen:
            raise RuntimeError("query before population finished; call freeze()")
        cells = self.cells(np.array([itemset_key(x)]))[:, 0]
        return int(self.counters[cells].min())

    def group_sums(self) -> np.ndarray:
        return self.counters.reshape(self.k_B, self.group_width).sum(axis=1)


def _occurrences(sample, w: int, guard: int) -> tuple[list[Itemset], np.ndarray, np.ndarray]:
    itemsets, keys, weights = [], [], []
    for x, wt in iter_weighted_itemsets(sample, w, guard):
        itemsets.append(x)
        keys.append(itemset_key(x))
        weights.append(wt)
    return itemsets, np.array(keys, dtype=np.int64), np.array(weights, dtype=np.int64)


def cm_populate(filt: CountMinFilter, sample, w: int, guard: int = DEFAULT_GUARD) -> CountMinFilter:
    """One pass: every itemset occurrence in every transaction bumps its k_B counters."""
    _, keys, weights = _occurrences(sample, w, guard)
    if len(keys):
        filt.add(keys, weights)
    return filt.freeze()


def cm_frequency(filt: CountMinFilter, x: Itemset, sample_size: int) -> Fraction:
    """Count-min frequency: the smallest of x's counters over the sample size."""
    return Fraction(filt.support(x), sample_size)


@dataclass(frozen=True)
class FHatDistribution:
    """Approximate rank-frequency curve.

    ``levels`` holds ``(counter_value, multiplicity)`` pairs sorted by
    value descending; the curve repeats each value ``multiplicity`` times
    and is zero afterwards. Frequencies are values over ``sample_size``.
    """

    levels: tuple[tuple[int, int], ...]
    sample_size: int
    m: int

    @property
    def total_mass(self) -> int:
        return sum(r for _, r in self.levels)

    def _cumulative(self) -> list[int]:
        out, acc = [], 0
        for _, r in self.levels:
            acc += r
            out.append(acc)
        return out

    def support_at(self, rank: int) -> int:
        if rank < 1:
            raise ParameterError(f"rank must be >= 1, got {rank}")
        cum = self.__dict__.get("_cum")
        if cum is None:
            cum = self._cumulative()
            object.__setattr__(self, "_cum", cum)
        k = bisect.bisect_left(cum, rank)
        return self.levels[k][0] if k < len(self.levels) else 0

    def at_rank(self, rank: int) -> Fraction:
        return Fraction(self.support_at(rank), self.sample_size)


def build_fhat(filt: CountMinFilter, sample, w: int, params: CMParams, m: int,
               guard: int = DEFAULT_GUARD) -> FHatDistribution:
    """Second pass over the sample: per-counter support totals, then level multiplicities.

    Each occurring itemset is charged to its minimum counter (lowest index
    on ties). A counter with value ``val`` and charged total ``v`` yields
    ``floor(v / (val - eps_B |S|))`` copies of ``val / |S|``; when the
    denominator is not positive the level takes every rank up to ``m`` not
    claimed by larger levels. The curve is truncated at rank ``m``.
    """
    _, keys, weights = _occurrences(sample, w, guard)
    size = params.sample_size
    charged = np.zeros(filt.c, dtype=np.int64)
    if len(keys):
        cells = filt.cells(keys)
        vals = filt.counters[cells]
        pick = np.argmin(vals, axis=0)
        cx = cells[pick, np.arange(cells.shape[1])]
        np.add.at(charged, cx, weights)
    slack = exact(params.eps_B) * size
    raw: list[tuple[int, int | None]] = []
    for ell in np.flatnonzero(charged).tolist():
        val = int(filt.counters[ell])
        den = val - slack
        raw.append((val, math.floor(Fraction(int(charged[ell])) / den) if den > 0 else None))
    # only ranks 1..m are ever queried; a degenerate level fills every rank left below it
    raw.sort(key=lambda lv: (-lv[0], lv[1] is not None))
    levels, placed = [], 0
    for val, r in raw:
        if placed >= m:
            break
        r = m - placed if r is None else min(r, m - placed)
        if r > 0:
            levels.append((val, r))
            placed += r
    return FHatDistribution(tuple(levels), size, m)


def cm_stopping_condition(fK: Fraction, fhat: FHatDistribution, schedule: PhaseSchedule,
                          j: int) -> tuple[bool, tuple[float, ...]]:
    """Rank-gap condition with the sample's rank frequencies replaced by ``fhat``."""
    eps = schedule.params.eps_exact
    b = schedule.buckets(j)
    fK = Fraction(fK)
    ok, margins = True, []
    for i in range(1, b.h + 1):
        gap = fK - fhat.at_rank(b.prefix(i - 1) + 1) - (i + 1) * eps
        ok = ok and gap > 0
        margins.append(float(gap))
    return ok, tuple(margins)


def split_delta(delta: float) -> tuple[float, float]:
    """Symmetric split with (1 - d1)(1 - d2) = 1 - delta."""
    d = 1 - math.sqrt(1 - delta)
    return d, d


def run_progressive_cm(
    dataset: TransactionDataset,
    params: ApproxParams,
    seed: int,
    *,
    eps_B: float | None = None,
    delta_split: tuple[float, float] | None = None,
    geometric_factor: float = 1.0,
    extend: bool = False,
    guard: int = DEFAULT_GUARD,
    max_counters: int = DEFAULT_MAX_COUNTERS,
    keep_tables: bool = False,
    on_phase: Callable[[PhaseTrace], None] | None = None,
) -> MiningOutcome:
    """Progressive sampling whose stopping test reads a count-min filter.

    The schedule uses ``delta_1``; each phase's filter is sized for failure
    budget ``delta_2``. ``eps_B`` defaults to ``eps / 4``. Every trace entry
    also carries the exact-count margins of the same sample.
    """
    d1, d2 = delta_split if delta_split is not None else split_delta(params.delta)
    if not (0 < d1 < 1 and 0 < d2 < 1) or abs((1 - d1) * (1 - d2) - (1 - params.delta)) > 1e-6:
        raise ParameterError(f"delta split ({d1}, {d2}) does not satisfy (1-d1)(1-d2) = 1-delta")
    eps_B = params.eps / 4 if eps_B is None else eps_B
    sched_params = ApproxParams(params.K, params.w, params.eps, d1)
    schedule = PhaseSchedule.build(sched_params, dataset.universe_size, len(dataset), geometric_factor)
    m = schedule.m

    def evaluate(table, sample, j, rng):
        fK = rank_frequency(table, params.K, m)
        cmp = cm_params(eps_B, d2, sample, params.w, m, max_counters)
        filt = cm_populate(CountMinFilter.from_params(cmp, rng), sample, params.w, guard)
        fhat = build_fhat(filt, sample, params.w, cmp, m, guard)
        ok, margins = cm_stopping_condition(fK, fhat, schedule, j)
        _, exact_margins = stopping_condition(table, schedule, j)
        sketch = {**cmp.to_dict(), "levels": len(fhat.levels)}
        return ok, margins, {"exact_margins": exact_margins, "sketch": sketch}

    return drive(dataset, schedule, seed, evaluate, extend=extend, guard=guard,
                 keep_tables=keep_tables, on_phase=on_phase)
