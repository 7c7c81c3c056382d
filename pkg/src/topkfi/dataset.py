"""Transaction datasets: FIMI I/O, seeded sampling and synthetic generators.

All randomness comes from numpy's PCG64 bit generator, seeded explicitly.
Independent streams are derived with :class:`numpy.random.SeedSequence`
spawning, so parallel trials never share state.
"""

from __future__ import annotations

import hashlib
import io
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO

import numpy as np

from .errors import DataError, ParameterError

Transaction = tuple[int, ...]


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator from an int seed or a SeedSequence."""
    return np.random.Generator(np.random.PCG64(seed))


def _check_transaction(t: Transaction, lineno: int | None = None) -> None:
    where = f" (transaction {lineno})" if lineno is not None else ""
    prev = -1
    for item in t:
        if item <= prev:
            raise DataError(f"transaction items must be strictly increasing non-negative ints{where}: {t}")
        prev = item


@dataclass(frozen=True)
class TransactionDataset:
    """Immutable ordered collection of transactions.

    ``universe_size`` is the number of items ``n`` in the universe. When not
    given it is ``1 + max item id``; a declared value may exceed that, which
    enlarges the itemset universe without adding data.
    """

    transactions: tuple[Transaction, ...]
    universe_size: int = 0
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        txs = tuple(tuple(t) for t in self.transactions)
        object.__setattr__(self, "transactions", txs)
        if self.validate:
            for i, t in enumerate(txs):
                _check_transaction(t, i)
        top = max((t[-1] for t in txs if t), default=-1) + 1
        if self.universe_size and self.universe_size < top:
            raise DataError(f"universe_size {self.universe_size} smaller than item id {top - 1} + 1")
        if not self.universe_size:
            object.__setattr__(self, "universe_size", max(top, 1))

    def __len__(self) -> int:
        return len(self.transactions)

    def __iter__(self) -> Iterator[Transaction]:
        return iter(self.transactions)

    def __getitem__(self, i):
        return self.transactions[i]

    @property
    def mean_length(self) -> float:
        if not self.transactions:
            return 0.0
        return sum(map(len, self.transactions)) / len(self.transactions)

    @property
    def distinct_items(self) -> int:
        return len({i for t in self.transactions for i in t})

    @cached_property
    def fingerprint(self) -> str:
        """SHA-256 of the FIMI serialisation plus the declared universe size."""
        h = hashlib.sha256()
        h.update(f"n={self.universe_size}\n".encode())
        for t in self.transactions:
            h.update(" ".join(map(str, t)).encode())
            h.update(b"\n")
        return h.hexdigest()

    def require_nonempty(self) -> None:
        if not self.transactions:
            raise DataError("dataset contains no transactions")


@dataclass(frozen=True)
class SampleSpec:
    size: int
    seed: int

    def __post_init__(self):
        if self.size < 1:
            raise ParameterError(f"sample size must be >= 1, got {self.size}")


# ---------------------------------------------------------------------------
# FIMI format


def parse_fimi(stream: IO[str] | Iterable[str] | str, universe_size: int = 0) -> TransactionDataset:
    """Read whitespace-separated item ids, one transaction per line.

    Blank lines are skipped and duplicate items within a line are dropped.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    txs = []
    for lineno, line in enumerate(stream, 1):
        tokens = line.split()
        if not tokens:
            continue
        try:
            items = [int(tok) for tok in tokens]
        except ValueError:
            raise DataError(f"line {lineno}: non-integer token in {line.strip()!r}") from None
        if min(items) < 0:
            raise DataError(f"line {lineno}: negative item id")
        txs.append(tuple(sorted(set(items))))
    if not txs:
        raise DataError("empty FIMI input")
    return TransactionDataset(tuple(txs), universe_size, validate=False)


def read_fimi(path, universe_size: int = 0) -> TransactionDataset:
    with open(path, encoding="ascii") as fh:
        return parse_fimi(fh, universe_size)


def write_fimi(dataset: TransactionDataset, stream: IO[str] | None = None) -> str | None:
    """Serialise to FIMI text. Returns the text when no stream is given."""
    if not len(dataset):
        raise DataError("cannot write an empty dataset")
    out = stream if stream is not None else io.StringIO()
    for t in dataset.transactions:
        out.write(" ".join(map(str, t)))
        out.write("\n")
    if stream is None:
        return out.getvalue()
    return None


def save_fimi(dataset: TransactionDataset, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        write_fimi(dataset, fh)


# ---------------------------------------------------------------------------
# sampling


def draw_sample(dataset: TransactionDataset, size: int, rng: np.random.Generator) -> tuple[Transaction, ...]:
    """Draw ``size`` transactions uniformly with replacement using ``rng``."""
    dataset.require_nonempty()
    idx = rng.integers(0, len(dataset), size=size)
    txs = dataset.transactions
    return tuple(txs[i] for i in idx.tolist())


def sample_with_replacement(dataset: TransactionDataset, spec: SampleSpec) -> TransactionDataset:
    """Uniform i.i.d. sample of ``spec.size`` transactions, deterministic in ``spec.seed``.

    The sample keeps the parent's declared universe size.
    """
    txs = draw_sample(dataset, spec.size, make_rng(spec.seed))
    return TransactionDataset(txs, dataset.universe_size, validate=False)


# ---------------------------------------------------------------------------
# generators


def gen_lowerbound_dataset(K: int, ell: int, p_K: float, eps: float, N: int, seed: int) -> TransactionDataset:
    """Random dataset used to show the sample-size bound is tight.

    Items ``0..K-1`` are each included independently with probability
    ``p_K``; items ``K..K+ell-1`` with ``p_K - 2*eps``. Empty transactions
    are kept.
    """
    if K < 1 or ell < 1 or N < 1:
        raise ParameterError("K, ell and N must all be >= 1")
    if not 0 < eps < 1:
        raise ParameterError(f"eps must lie in (0, 1), got {eps}")
    if not 0 < p_K < 1:
        raise ParameterError(f"p_K must lie in (0, 1), got {p_K}")
    if not p_K > 2 * eps:
        raise ParameterError(f"p_K > 2*eps violated: {p_K} <= {2 * eps}")
    if not p_K - p_K**2 > eps:
        raise ParameterError(f"p_K - p_K^2 > eps violated: {p_K - p_K**2} <= {eps}")
    p_ell = p_K - 2 * eps
    probs = np.concatenate([np.full(K, p_K), np.full(ell, p_ell)])
    rng = make_rng(seed)
    txs: list[Transaction] = []
    # chunked so the boolean matrix stays around 16M cells
    chunk = max(1, 16_000_000 // (K + ell))
    for start in range(0, N, chunk):
        rows = min(chunk, N - start)
        hits = rng.random((rows, K + ell)) < probs
        txs.extend(tuple(np.flatnonzero(r).tolist()) for r in hits)
    return TransactionDataset(tuple(txs), K + ell, validate=False)


def gen_planted_dataset(ell: int, n: int, N: int) -> TransactionDataset:
    """``N`` copies of ``{0..ell-1}`` followed by one singleton ``{i}`` per ``i`` in ``ell..n-1``."""
    if ell < 1 or N < 1:
        raise ParameterError("ell and N must be >= 1")
    if n <= ell:
        raise ParameterError(f"need n > ell, got n={n}, ell={ell}")
    wide = tuple(range(ell))
    txs = (wide,) * N + tuple((i,) for i in range(ell, n))
    return TransactionDataset(txs, n, validate=False)


def gen_zipf_dataset(n: int, N: int, seed: int, scale: float = 0.5, exponent: float = 0.8) -> TransactionDataset:
    """Independent-item dataset whose item ``i`` has inclusion probability ``scale / (i+1)**exponent``.

    Gives a heavy-headed item distribution with a long tail, a convenient
    desk-scale stand-in for retail-style benchmarks.
    """
    if n < 1 or N < 1:
        raise ParameterError("n and N must be >= 1")
    probs = np.minimum(scale / np.arange(1, n + 1, dtype=float) ** exponent, 1.0)
    hits = make_rng(seed).random((N, n)) < probs
    txs = tuple(tuple(np.flatnonzero(r).tolist()) for r in hits)
    return TransactionDataset(txs, n, validate=False)


def transactions_of(data: TransactionDataset | Sequence[Transaction]) -> Sequence[Transaction]:
    if isinstance(data, TransactionDataset):
        return data.transactions
    return data
