"""Sample-size bounds and the progressive phase schedule.

Every sample size is the ceiling of its real-valued formula, so rounding
never weakens a probabilistic guarantee. Integer quantities that can grow
combinatorially (the itemset universe size, bucket widths) are exact
Python ints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath

from .errors import ParameterError

# bucket base per phase is K * (e/2)**j; see PhaseSchedule.buckets
_BUCKET_GROWTH = math.e / 2


@dataclass(frozen=True)
class ApproxParams:
    K: int
    w: int
    eps: float
    delta: float

    def __post_init__(self):
        if not isinstance(self.K, int) or self.K < 1:
            raise ParameterError(f"K must be an integer >= 1, got {self.K!r}")
        if not isinstance(self.w, int) or self.w < 1:
            raise ParameterError(f"w must be an integer >= 1, got {self.w!r}")
        if not 0 < self.eps < 1:
            raise ParameterError(f"eps must lie in (0, 1), got {self.eps}")
        if not 0 < self.delta < 1:
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta}")

    @property
    def eps_exact(self) -> Fraction:
        """eps as the decimal the user typed (0.02 -> 1/50), for exact comparisons."""
        return exact(self.eps)

    def to_dict(self) -> dict:
        return {"K": self.K, "w": self.w, "eps": self.eps, "delta": self.delta}


def exact(x: float) -> Fraction:
    return Fraction(repr(float(x)))


def _ceil(value: float, precise) -> int:
    """Ceiling of a float, recomputed with mpmath when it sits next to an integer."""
    if abs(value - round(value)) < 1e-6 * max(1.0, abs(value)):
        with mpmath.workdps(60):
            return int(mpmath.ceil(precise()))
    return math.ceil(value)


def universe_count(n: int, w: int) -> int:
    """m = sum_{i=1..w} C(n, i), the number of itemsets of size at most w over n items."""
    if n < 1 or w < 1:
        raise ParameterError(f"need n >= 1 and w >= 1, got n={n}, w={w}")
    if w > n:
        raise ParameterError(f"w={w} exceeds the universe size n={n}")
    return sum(math.comb(n, i) for i in range(1, w + 1))


def theorem1_size(params: ApproxParams, m: int) -> int:
    """Static sample size ceil((2/eps^2) ln((2m + K(m-K)) / delta))."""
    K = params.K
    if K > m:
        raise ParameterError(f"K={K} exceeds m={m}")
    arg = 2 * m + K * (m - K)
    value = 2.0 / params.eps**2 * (math.log(arg) - math.log(params.delta))

    def precise():
        e, d = params.eps_exact, exact(params.delta)
        return 2 / (mpmath.mpf(e.numerator) / e.denominator) ** 2 * mpmath.log(
            mpmath.mpf(arg) * d.denominator / d.numerator
        )

    return _ceil(value, precise)


def fact1_bounds(eps: float, t: int) -> tuple[float, float]:
    """Upper bounds on the swap probability and on the two-sided deviation probability at sample size t."""
    if not 0 < eps < 1:
        raise ParameterError(f"eps must lie in (0, 1), got {eps}")
    if t < 1:
        raise ParameterError(f"t must be >= 1, got {t}")
    p = math.exp(-(eps**2) / 2 * t)
    return min(p, 1.0), min(2 * p, 1.0)


def linear_phase_size(params: ApproxParams, j: int) -> int:
    """t_j = ceil((8/eps^2)(ln(8K/delta) + j))."""
    if j < 0:
        raise ParameterError(f"phase index must be >= 0, got {j}")
    value = 8.0 / params.eps**2 * (math.log(8 * params.K / params.delta) + j)

    def precise():
        e, d = params.eps_exact, exact(params.delta)
        return 8 / (mpmath.mpf(e.numerator) / e.denominator) ** 2 * (
            mpmath.log(mpmath.mpf(8 * params.K) * d.denominator / d.numerator) + j
        )

    return _ceil(value, precise)


def phase_size(params: ApproxParams, j: int, geometric_factor: float = 1.0) -> int:
    """Sample size of phase j; a geometric factor g > 1 uses max(t_j, t_0 * g**j)."""
    if geometric_factor < 1:
        raise ParameterError(f"geometric factor must be >= 1, got {geometric_factor}")
    t = linear_phase_size(params, j)
    if geometric_factor > 1:
        t = max(t, math.ceil(linear_phase_size(params, 0) * geometric_factor**j))
    return t


@dataclass(frozen=True)
class BucketWidths:
    """Rank buckets for one phase.

    ``s[i]`` is the width of bucket i and ``S[i]`` the prefix sum
    ``s[0] + ... + s[i]``, for i = 0..h. ``h`` is the largest index with
    ``S[h-1] + 1 <= m``.
    """

    sigma: float
    s: tuple[int, ...]
    S: tuple[int, ...]
    h: int

    def prefix(self, i: int) -> int:
        """S_j(i) with S_j(-1) = 0."""
        return 0 if i < 0 else self.S[i]


def bucket_widths(params: ApproxParams, j: int, m: int) -> BucketWidths:
    """s_j(i) = floor((2 sigma_j)^((i+1)^2) / 2) with sigma_j = K (e/2)^j, up to the first i with S_j(i) >= m."""
    if j < 0:
        raise ParameterError(f"phase index must be >= 0, got {j}")
    if m < 1:
        raise ParameterError(f"m must be >= 1, got {m}")
    K = params.K
    sigma = K * _BUCKET_GROWTH**j
    widths: list[int] = []
    sums: list[int] = []
    total = 0
    # s(h) <= (2m+2)^4 / 2, so this many digits keeps every floor exact
    dps = 4 * len(str(2 * m + 2)) + 4 * len(str(K)) + j + 30
    i = 0
    while True:
        power = (i + 1) ** 2
        if j == 0:
            s_i = (2 * K) ** power // 2
        else:
            with mpmath.workdps(dps + power * 2):
                base = 2 * K * (mpmath.e / 2) ** j
                s_i = int(mpmath.floor(base**power / 2))
        widths.append(s_i)
        total += s_i
        sums.append(total)
        if total >= m:
            break
        i += 1
    return BucketWidths(sigma, tuple(widths), tuple(sums), len(sums) - 1)


@dataclass(frozen=True)
class PhaseSchedule:
    """Everything the progressive driver needs to know before sampling.

    ``bound`` is min(|D|, static sample size) and ``j_max`` the first phase
    whose size reaches it.
    """

    params: ApproxParams
    universe_size: int
    dataset_size: int | None
    m: int
    theorem1: int
    bound: int
    j_max: int
    geometric_factor: float = 1.0
    _buckets: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def build(cls, params: ApproxParams, universe_size: int, dataset_size: int | None = None,
              geometric_factor: float = 1.0) -> PhaseSchedule:
        m = universe_count(universe_size, params.w)
        t1 = theorem1_size(params, m)
        bound = t1 if dataset_size is None else min(dataset_size, t1)
        j = 0
        while phase_size(params, j, geometric_factor) < bound:
            j += 1
        return cls(params, universe_size, dataset_size, m, t1, bound, j, geometric_factor)

    def phase_size(self, j: int) -> int:
        return phase_size(self.params, j, self.geometric_factor)

    def buckets(self, j: int) -> BucketWidths:
        if j not in self._buckets:
            self._buckets[j] = bucket_widths(self.params, j, self.m)
        return self._buckets[j]

    def to_dict(self) -> dict:
        return {
            **self.params.to_dict(),
            "n": self.universe_size,
            "dataset_size": self.dataset_size,
            "m": self.m,
            "theorem1_size": self.theorem1,
            "t0": self.phase_size(0),
            "bound": self.bound,
            "j_max": self.j_max,
            "geometric_factor": self.geometric_factor,
        }
