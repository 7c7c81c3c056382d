"""Ground-truth checks and multi-trial experiments.

An output W is an eps-approximation of the true top-K when

* every reported itemset has true frequency >= f^(K) - eps,
* every itemset with true frequency >= f^(K) + eps is reported,
* every reported frequency is within eps of the truth,

and W has at least K entries. All three checks use exact rationals.
"""

from __future__ import annotations

import csv
import io
import json
import os
import statistics
import time
import warnings
from collections import Counter
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import stats

from .dataset import SampleSpec, TransactionDataset, gen_lowerbound_dataset, make_rng, sample_with_replacement
from .errors import ParameterError
from .miner import DEFAULT_GUARD, CountTable, Itemset, TopKResult, count_itemsets, rank_support, top_k
from .progressive import MiningOutcome, bucketize, run_progressive
from .schedule import ApproxParams, PhaseSchedule, exact, theorem1_size, universe_count

SCHEMA_VERSION = 1


@dataclass
class ApproxVerdict:
    size_ok: bool
    p1_ok: bool
    p2_ok: bool
    p3_ok: bool
    worst_p3_error: float
    recovery_fraction: float
    exact_match: bool
    violating_itemsets: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.size_ok and self.p1_ok and self.p2_ok and self.p3_ok


def verify_approximation(W: TopKResult, ground_truth: CountTable, params: ApproxParams,
                         universe_size: int) -> ApproxVerdict:
    """Check W against the exact counts of the full dataset.

    Only itemsets with true frequency >= f^(K) + eps can break the
    inclusion property, so those are read off the ground-truth table
    instead of scanning all m candidates.
    """
    m = universe_count(universe_size, params.w)
    if params.K > m:
        raise ParameterError(f"K={params.K} exceeds m={m}")
    eps = params.eps_exact
    N = ground_truth.total
    fK = Fraction(rank_support(ground_truth, params.K, m), N)
    violations = []

    size_ok = len(W) >= params.K
    if not size_ok:
        violations.append(("size", len(W)))

    p1_ok = p3_ok = True
    worst = Fraction(0)
    for x in W.itemsets:
        f_true = ground_truth.frequency(x)
        if f_true < fK - eps:
            p1_ok = False
            violations.append(("P1", x))
        err = abs(W.exact_frequency(x) - f_true)
        worst = max(worst, err)
        if err > eps:
            p3_ok = False
            violations.append(("P3", x))

    p2_ok = True
    truth_top: list[Itemset] = []
    for x, s in ground_truth.canonical:
        f = Fraction(s, N)
        if f < fK:
            break
        truth_top.append(x)
        if f >= fK + eps and x not in W:
            p2_ok = False
            violations.append(("P2", x))

    hit = sum(1 for x in truth_top if x in W)
    recovery = hit / len(truth_top) if truth_top else 1.0
    exact_match = hit == len(truth_top) == len(W)
    return ApproxVerdict(size_ok, p1_ok, p2_ok, p3_ok, float(worst), recovery, exact_match, violations)


# ---------------------------------------------------------------------------
# ground truth


def ground_truth(dataset: TransactionDataset, w: int, cache_dir: str | os.PathLike | None = None,
                 guard: int = DEFAULT_GUARD) -> CountTable:
    """Exact counts of the whole dataset, cached as JSON keyed by content hash and w."""
    if cache_dir is None:
        return count_itemsets(dataset, w, guard)
    path = Path(cache_dir) / f"{dataset.fingerprint[:24]}-w{w}.json"
    if path.exists():
        raw = json.loads(path.read_text())
        return CountTable({tuple(x): s for x, s in raw["entries"]}, raw["total"], w)
    table = count_itemsets(dataset, w, guard)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps({"total": table.total, "w": w,
                               "entries": [[list(x), s] for x, s in table.canonical]}))
    tmp.replace(path)
    return table


# ---------------------------------------------------------------------------
# trials


@dataclass
class TrialReport:
    seed: int
    verdict: ApproxVerdict
    sample_size: int
    stop_phase: int | None = None
    terminal: str | None = None
    elapsed_ms: float = 0.0

    def row(self) -> dict:
        v = self.verdict
        return {
            "seed": self.seed, "ok": int(v.ok), "p1": int(v.p1_ok), "p2": int(v.p2_ok), "p3": int(v.p3_ok),
            "size_ok": int(v.size_ok), "worst_p3_error": v.worst_p3_error, "recovery": v.recovery_fraction,
            "exact_match": int(v.exact_match), "sample_size": self.sample_size,
            "stop_phase": "" if self.stop_phase is None else self.stop_phase,
            "terminal": self.terminal or "", "elapsed_ms": round(self.elapsed_ms, 3),
        }


@dataclass
class ExperimentSummary:
    kind: str
    params: ApproxParams
    trials: int
    successes: int
    success_rate: float
    mean_worst_p3_error: float
    max_worst_p3_error: float
    p3_error_quantiles: dict
    p3_error_in_band: float
    mean_recovery: float
    min_recovery: float
    exact_match_rate: float
    bound: int
    stop_size_mean: float | None = None
    stop_size_min: int | None = None
    terminals: dict = field(default_factory=dict)
    stop_phases: dict = field(default_factory=dict)
    reports: list[TrialReport] = field(default_factory=list, repr=False)

    @classmethod
    def from_reports(cls, kind: str, params: ApproxParams, reports: Sequence[TrialReport], bound: int) -> ExperimentSummary:
        """Aggregate trial reports; the result does not depend on their order."""
        reports = sorted(reports, key=lambda r: r.seed)
        n = len(reports)
        if n == 0:
            raise ParameterError("no trials to summarise")
        errs = sorted(r.verdict.worst_p3_error for r in reports)
        rec = [r.verdict.recovery_fraction for r in reports]
        ok = sum(r.verdict.ok for r in reports)
        lo, hi = params.eps / 10, params.eps / 5
        q = np.quantile(errs, [0.1, 0.5, 0.9]).tolist()
        sizes = [r.sample_size for r in reports]
        progressive = any(r.stop_phase is not None for r in reports)
        return cls(
            kind=kind, params=params, trials=n, successes=ok, success_rate=ok / n,
            mean_worst_p3_error=statistics.fmean(errs), max_worst_p3_error=errs[-1],
            p3_error_quantiles={"p10": q[0], "p50": q[1], "p90": q[2]},
            p3_error_in_band=sum(lo <= e <= hi for e in errs) / n,
            mean_recovery=statistics.fmean(rec), min_recovery=min(rec),
            exact_match_rate=sum(r.verdict.exact_match for r in reports) / n,
            bound=bound,
            stop_size_mean=statistics.fmean(sizes) if progressive else None,
            stop_size_min=min(sizes) if progressive else None,
            terminals=dict(sorted(Counter(r.terminal for r in reports if r.terminal).items())),
            stop_phases={str(k): v for k, v in sorted(Counter(r.stop_phase for r in reports if r.stop_phase is not None).items())},
            reports=list(reports),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("reports")
        d["params"] = self.params.to_dict()
        d["schema_version"] = SCHEMA_VERSION
        return d

    def trials_csv(self) -> str:
        buf = io.StringIO()
        rows = [r.row() for r in self.reports]
        wr = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        wr.writeheader()
        wr.writerows(rows)
        return buf.getvalue()


def stop_size_csv(summaries: Sequence[ExperimentSummary]) -> str:
    """One row per (K, w): mean and minimum stopping sample size next to the static bound."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["K", "w", "stop_size_mean", "stop_size_min", "bound"])
    for s in summaries:
        wr.writerow([s.params.K, s.params.w, s.stop_size_mean, s.stop_size_min, s.bound])
    return buf.getvalue()


def trial_seeds(seed: int, trials: int) -> list[int]:
    return [int(ss.generate_state(1, np.uint64)[0]) for ss in np.random.SeedSequence(seed).spawn(trials)]


_SHARED = None


def _init_worker(shared):
    global _SHARED
    _SHARED = shared


def _call(fn, seed):
    return fn(_SHARED, seed)


def map_trials(fn: Callable, shared, seeds: Sequence[int], jobs: int = 1) -> list:
    """Run ``fn(shared, seed)`` for every seed, optionally on a process pool."""
    if jobs <= 1 or len(seeds) <= 1:
        return [fn(shared, s) for s in seeds]
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(shared,)) as ex:
        return list(ex.map(_call, [fn] * len(seeds), seeds, chunksize=max(1, len(seeds) // (4 * jobs))))


def default_jobs() -> int:
    return os.cpu_count() or 1


def _static_trial(shared, seed: int) -> TrialReport:
    dataset, params, truth, t, guard = shared
    start = time.perf_counter()
    sample = sample_with_replacement(dataset, SampleSpec(t, seed))
    W = top_k(count_itemsets(sample, params.w, guard), params.K, params.w, dataset.universe_size)
    verdict = verify_approximation(W, truth, params, dataset.universe_size)
    return TrialReport(seed, verdict, t, elapsed_ms=(time.perf_counter() - start) * 1e3)


def run_static_experiment(dataset: TransactionDataset, params: ApproxParams, trials: int = 100, seed: int = 0, *,
                          jobs: int = 1, truth: CountTable | None = None, cache_dir=None,
                          guard: int = DEFAULT_GUARD) -> ExperimentSummary:
    """Mine ``trials`` independent samples of the static bound's size and check each output."""
    m = universe_count(dataset.universe_size, params.w)
    t = theorem1_size(params, m)
    if t > len(dataset):
        warnings.warn(f"static sample size {t} exceeds |D| = {len(dataset)}", stacklevel=2)
    if truth is None:
        truth = ground_truth(dataset, params.w, cache_dir, guard)
    reports = map_trials(_static_trial, (dataset, params, truth, t, guard), trial_seeds(seed, trials), jobs)
    return ExperimentSummary.from_reports("static", params, reports, t)


def _progressive_trial(shared, seed: int) -> TrialReport:
    dataset, params, truth, opts = shared
    start = time.perf_counter()
    out = _run_one(dataset, params, seed, opts)
    verdict = verify_approximation(out.result, truth, params, dataset.universe_size)
    return TrialReport(seed, verdict, out.sample_size, out.stop_phase, out.terminal,
                       (time.perf_counter() - start) * 1e3)


def _run_one(dataset, params, seed, opts) -> MiningOutcome:
    opts = dict(opts)
    if opts.pop("use_sketch", False):
        from .cmsketch import run_progressive_cm

        return run_progressive_cm(dataset, params, seed, **opts)
    opts.pop("eps_B", None)
    opts.pop("delta_split", None)
    opts.pop("max_counters", None)
    return run_progressive(dataset, params, seed, **opts)


def run_progressive_experiment(dataset: TransactionDataset, params: ApproxParams, trials: int = 100, seed: int = 0, *,
                               use_sketch: bool = False, eps_B: float | None = None,
                               delta_split: tuple[float, float] | None = None, geometric_factor: float = 1.0,
                               extend: bool = False, jobs: int = 1, truth: CountTable | None = None,
                               cache_dir=None, guard: int = DEFAULT_GUARD) -> ExperimentSummary:
    """Repeat the progressive algorithm over seeds; the summary carries stop sizes and phases."""
    if truth is None:
        truth = ground_truth(dataset, params.w, cache_dir, guard)
    opts = {"use_sketch": use_sketch, "geometric_factor": geometric_factor, "extend": extend, "guard": guard}
    if use_sketch:
        opts["eps_B"] = eps_B
        opts["delta_split"] = delta_split
    reports = map_trials(_progressive_trial, (dataset, params, truth, opts), trial_seeds(seed, trials), jobs)
    sched = PhaseSchedule.build(params, dataset.universe_size, len(dataset), geometric_factor)
    return ExperimentSummary.from_reports("progressive-sketch" if use_sketch else "progressive", params, reports,
                                          sched.bound)


def _lowerbound_trial(shared, seed: int) -> bool:
    dataset, params, truth, size, guard = shared
    if size >= len(dataset):
        table = truth
    else:
        table = count_itemsets(sample_with_replacement(dataset, SampleSpec(size, seed)), params.w, guard)
    W = top_k(table, params.K, params.w, dataset.universe_size)
    return not verify_approximation(W, truth, params, dataset.universe_size).ok


def run_lowerbound_experiment(K: int, ell: int, p_K: float, eps: float, N: int, undersample_sizes: Sequence[int],
                              trials: int = 100, seed: int = 0, *, delta: float = 0.1, w: int = 1, jobs: int = 1,
                              guard: int = DEFAULT_GUARD) -> list[tuple[int, float]]:
    """Failure rate of sample top-K on the tightness dataset, per sample size.

    A size of at least ``N`` mines the whole dataset rather than sampling it.
    """
    gen_seed, trial_seed = np.random.SeedSequence(seed).spawn(2)
    dataset = gen_lowerbound_dataset(K, ell, p_K, eps, N, int(gen_seed.generate_state(1, np.uint64)[0]))
    params = ApproxParams(K, w, eps, delta)
    truth = count_itemsets(dataset, w, guard)
    base = int(trial_seed.generate_state(1, np.uint64)[0])
    curve = []
    for size in undersample_sizes:
        if size < 1:
            raise ParameterError(f"sample sizes must be >= 1, got {size}")
        fails = map_trials(_lowerbound_trial, (dataset, params, truth, size, guard),
                           trial_seeds(base + size, trials), jobs)
        curve.append((size, sum(fails) / trials))
    return curve


def curve_csv(curve: Sequence[tuple[int, float]]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["size", "failure_rate"])
    wr.writerows(curve)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# concentration checks


def fact1_monte_carlo(n_x: int, n_y: int, N: int, eps: float, t: int, trials: int, seed: int) -> tuple[float, float]:
    """Empirical swap and deviation rates for two planted itemsets.

    The dataset has ``n_x`` transactions containing only x, ``n_y``
    containing only y and the rest empty. Returns the fraction of samples
    of size ``t`` with ``f_S(y) > f_S(x)`` and the fraction with
    ``|f_S(x) - f_D(x)| >= eps``.
    """
    if min(n_x, n_y) < 0 or n_x + n_y > N:
        raise ParameterError("need non-negative n_x, n_y with n_x + n_y <= N")
    rng = make_rng(seed)
    e = exact(eps)
    swaps = devs = 0
    step = max(1, 4_000_000 // t)
    for start in range(0, trials, step):
        rows = min(step, trials - start)
        idx = rng.integers(0, N, size=(rows, t))
        sx = (idx < n_x).sum(axis=1)
        sy = ((idx >= n_x) & (idx < n_x + n_y)).sum(axis=1)
        swaps += int((sy > sx).sum())
        # |sx/t - n_x/N| >= p/q  <=>  |sx*N - n_x*t| * q >= p * N * t
        lhs = np.abs(sx * N - n_x * t) * e.denominator
        devs += int((lhs >= e.numerator * N * t).sum())
    return swaps / trials, devs / trials


def rate_at_most(failures: int, trials: int, bound: float, alpha: float) -> bool:
    """False when a one-sided binomial test rejects ``p <= bound`` at level alpha."""
    if failures == 0:
        return True
    return bool(stats.binom.sf(failures - 1, trials, min(bound, 1.0)) >= alpha)


def rate_at_least(successes: int, trials: int, target: float, alpha: float) -> bool:
    """False when a one-sided binomial test rejects ``p >= target`` at level alpha."""
    return bool(stats.binom.cdf(successes, trials, target) >= alpha)


def bucket_deviation_holds(outcome: MiningOutcome, truth: CountTable) -> bool:
    """Whether every phase sample kept each itemset of bucket i within (i+1) eps / 2 of its true frequency.

    Needs an outcome run with ``keep_tables=True``. Ranks follow the
    canonical order of ``truth``; itemsets absent from the data never
    appear in a sample, so only ranks with non-zero truth are scanned.
    """
    sched = outcome.schedule
    eps = sched.params.eps_exact
    canon = truth.canonical
    for p in outcome.trace:
        if p.table is None:
            raise ParameterError("outcome has no phase tables; run with keep_tables=True")
        for i, (lo, hi) in enumerate(bucketize(truth, sched, p.j)):
            tol = (i + 1) * eps / 2
            for x, s in canon[lo - 1:min(hi, len(canon))]:
                if abs(p.table.frequency(x) - Fraction(s, truth.total)) >= tol:
                    return False
    return True
