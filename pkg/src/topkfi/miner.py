"""Exact itemset counting and top-K extraction.

Itemsets are sorted tuples of item ids. The canonical order sorts by
support descending and breaks ties by ascending tuple order, so results
are deterministic and comparable across runs. Itemsets missing from a
table rank after every present one with frequency zero.
"""

from __future__ import annotations

import math
from collections import Counter
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import combinations

from .dataset import Transaction, TransactionDataset, transactions_of
from .errors import DataError, ParameterError, ResourceLimitError
from .schedule import universe_count

Itemset = tuple[int, ...]

DEFAULT_GUARD = 10**8


def subsets_count(length: int, w: int) -> int:
    """Number of non-empty subsets of size <= w of a ``length``-item transaction."""
    return sum(math.comb(length, i) for i in range(1, min(w, length) + 1))


def enumerate_itemsets(transaction: Sequence[int], w: int, guard: int = DEFAULT_GUARD) -> list[Itemset]:
    """All subsets of size 1..w, by size then lexicographically."""
    if w < 1:
        raise ParameterError(f"w must be >= 1, got {w}")
    t = tuple(transaction)
    n = subsets_count(len(t), w)
    if n > guard:
        raise ResourceLimitError(f"transaction of length {len(t)} has {n} subsets of size <= {w}; guard is {guard}")
    out: list[Itemset] = []
    for i in range(1, min(w, len(t)) + 1):
        out.extend(combinations(t, i))
    return out


def weighted_transactions(transactions: Iterable[Transaction]) -> list[tuple[Transaction, int]]:
    """Collapse duplicate transactions to ``(transaction, multiplicity)`` pairs in first-seen order."""
    return list(Counter(transactions).items())


def iter_weighted_itemsets(
    transactions: Iterable[Transaction], w: int, guard: int = DEFAULT_GUARD
) -> Iterator[tuple[Itemset, int]]:
    """Yield ``(itemset, multiplicity)`` for every itemset of every distinct transaction.

    Summing the multiplicities of an itemset over the stream gives its support.
    """
    distinct = weighted_transactions(transactions)
    _check_guard(distinct, w, guard)
    for t, wt in distinct:
        for i in range(1, min(w, len(t)) + 1):
            for x in combinations(t, i):
                yield x, wt


def _check_guard(distinct: Sequence[tuple[Transaction, int]], w: int, guard: int) -> None:
    total = 0
    for t, _ in distinct:
        total += subsets_count(len(t), w)
        if total > guard:
            raise ResourceLimitError(f"more than {guard} subsets of size <= {w} to enumerate; raise the guard or lower w")


@dataclass(frozen=True)
class CountTable:
    """Supports of every itemset of size <= w occurring in a collection.

    Zero-support itemsets are not stored.
    """

    entries: dict[Itemset, int]
    total: int
    w: int

    def support(self, x: Itemset) -> int:
        return self.entries.get(tuple(x), 0)

    def frequency(self, x: Itemset) -> Fraction:
        return Fraction(self.support(x), self.total)

    def __len__(self) -> int:
        return len(self.entries)

    @cached_property
    def canonical(self) -> list[tuple[Itemset, int]]:
        """Entries in canonical order."""
        return sorted(self.entries.items(), key=lambda kv: (-kv[1], kv[0]))

    @cached_property
    def sorted_supports(self) -> list[int]:
        return sorted(self.entries.values(), reverse=True)

    def merge(self, other: CountTable) -> CountTable:
        if self.w != other.w:
            raise ParameterError("cannot merge tables built with different w")
        merged = Counter(self.entries)
        merged.update(other.entries)
        return CountTable(dict(merged), self.total + other.total, self.w)


def count_itemsets(data: TransactionDataset | Sequence[Transaction], w: int, guard: int = DEFAULT_GUARD) -> CountTable:
    """Exact support of every occurring itemset of size <= w."""
    if w < 1:
        raise ParameterError(f"w must be >= 1, got {w}")
    txs = transactions_of(data)
    if not txs:
        raise DataError("cannot count itemsets of an empty collection")
    distinct = weighted_transactions(txs)
    _check_guard(distinct, w, guard)
    counts: Counter = Counter()
    for t, wt in distinct:
        top = min(w, len(t))
        if wt == 1:
            for i in range(1, top + 1):
                counts.update(combinations(t, i))
        else:
            for i in range(1, top + 1):
                for x in combinations(t, i):
                    counts[x] += wt
    return CountTable(dict(counts), len(txs), w)


def rank_support(table: CountTable, rank: int, m: int) -> int:
    if not 1 <= rank <= m:
        raise ParameterError(f"rank {rank} outside [1, {m}]")
    s = table.sorted_supports
    return s[rank - 1] if rank <= len(s) else 0


def rank_frequency(table: CountTable, rank: int, m: int) -> Fraction:
    """Frequency of the ``rank``-th itemset (1-based) among all ``m`` candidates."""
    return Fraction(rank_support(table, rank, m), table.total)


@dataclass(frozen=True)
class TopKResult:
    """The top-K itemsets of a table, ties at the threshold included.

    ``deficient`` is set when fewer than K itemsets have non-zero support;
    the threshold is then zero and only the non-zero itemsets are listed.
    """

    itemsets: tuple[Itemset, ...]
    supports: tuple[int, ...]
    total: int
    threshold_support: int
    K: int
    deficient: bool = False
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", dict(zip(self.itemsets, self.supports)))

    def __len__(self) -> int:
        return len(self.itemsets)

    def __contains__(self, x) -> bool:
        return tuple(x) in self._index

    @property
    def threshold(self) -> float:
        return self.threshold_support / self.total

    def exact_frequency(self, x: Itemset) -> Fraction:
        return Fraction(self._index[tuple(x)], self.total)

    def pairs(self) -> list[tuple[Itemset, float]]:
        return [(x, s / self.total) for x, s in zip(self.itemsets, self.supports)]

    def to_dict(self) -> dict:
        return {
            "itemsets": [{"items": list(x), "frequency": s / self.total} for x, s in zip(self.itemsets, self.supports)],
            "threshold": self.threshold,
            "deficient": self.deficient,
            "K": self.K,
            "sample_size": self.total,
        }


def top_k(table: CountTable, K: int, w: int, universe_size: int) -> TopKResult:
    """TOPK of the table: every itemset whose frequency reaches that of the K-th in canonical order."""
    if K < 1:
        raise ParameterError(f"K must be >= 1, got {K}")
    m = universe_count(universe_size, w)
    if K > m:
        raise ParameterError(f"K={K} exceeds the number of candidate itemsets m={m}")
    ordered = table.canonical
    if len(ordered) < K:
        return TopKResult(
            tuple(x for x, _ in ordered), tuple(s for _, s in ordered), table.total, 0, K, deficient=True
        )
    thr = ordered[K - 1][1]
    end = K
    while end < len(ordered) and ordered[end][1] >= thr:
        end += 1
    head = ordered[:end]
    return TopKResult(tuple(x for x, _ in head), tuple(s for _, s in head), table.total, thr, K)
