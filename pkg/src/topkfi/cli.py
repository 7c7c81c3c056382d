"""Command-line entry point.

Subcommands print JSON to stdout (or ``--output``) and a short human
summary to stderr. Exit codes: 0 success, 1 usage error, 2 data error,
3 resource-guard error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .dataset import (
    SampleSpec,
    gen_lowerbound_dataset,
    gen_planted_dataset,
    gen_zipf_dataset,
    read_fimi,
    sample_with_replacement,
    save_fimi,
)
from .errors import DataError, ParameterError, ResourceLimitError
from .evaluation import (
    SCHEMA_VERSION,
    curve_csv,
    default_jobs,
    run_lowerbound_experiment,
    run_progressive_experiment,
    run_static_experiment,
    stop_size_csv,
)
from .miner import DEFAULT_GUARD, count_itemsets, top_k
from .progressive import run_progressive
from .schedule import ApproxParams, PhaseSchedule, theorem1_size, universe_count

DATA_DIR_ENV = "TOPKFI_DATA_DIR"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RESOURCE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _resolve(path: str) -> Path:
    p = Path(path)
    if not p.exists() and not p.is_absolute() and os.environ.get(DATA_DIR_ENV):
        alt = Path(os.environ[DATA_DIR_ENV]) / p
        if alt.exists():
            return alt
    return p


def _load(args):
    try:
        return read_fimi(_resolve(args.dataset), args.universe_size or 0)
    except OSError as e:
        raise DataError(f"cannot read {args.dataset}: {e.strerror or e}") from None


def _params(args) -> ApproxParams:
    return ApproxParams(args.k, args.w, args.eps, args.delta)


def _emit(args, payload: dict) -> None:
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    text = json.dumps(payload, indent=2, sort_keys=False) + "\n"
    if getattr(args, "output", None):
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _write(path, text: str) -> None:
    if path:
        Path(path).write_text(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_mine_exact(args) -> None:
    if args.k < 1 or args.w < 1:
        raise ParameterError("K and w must be >= 1")
    ds = _load(args)
    res = top_k(count_itemsets(ds, args.w, args.guard), args.k, args.w, ds.universe_size)
    _emit(args, {"command": "mine-exact", "n": ds.universe_size, "transactions": len(ds), **res.to_dict()})
    _say(f"{len(res)} itemsets at threshold {res.threshold:.6g} from {len(ds)} transactions")


def cmd_bound(args) -> None:
    params = _params(args)
    sched = PhaseSchedule.build(params, args.n, args.dataset_size, args.geometric)
    _emit(args, {"command": "bound", **sched.to_dict(), "t": sched.theorem1})
    _say(f"m={sched.m} t={sched.theorem1} t0={sched.phase_size(0)} j_max={sched.j_max}")


def cmd_sample_mine(args) -> None:
    params = _params(args)
    ds = _load(args)
    m = universe_count(ds.universe_size, params.w)
    t = args.size or theorem1_size(params, m)
    sample = sample_with_replacement(ds, SampleSpec(t, args.seed))
    res = top_k(count_itemsets(sample, params.w, args.guard), params.K, params.w, ds.universe_size)
    _emit(args, {"command": "sample-mine", "params": params.to_dict(), "m": m, "sample_size": t, "seed": args.seed,
                 **res.to_dict()})
    _say(f"sampled {t} of {len(ds)} transactions; {len(res)} itemsets returned")


def cmd_progressive(args) -> None:
    params = _params(args)
    if args.delta1 is not None or args.delta2 is not None:
        if not args.sketch or args.delta1 is None or args.delta2 is None:
            raise ParameterError("--delta1 and --delta2 go together and need --sketch")
    ds = _load(args)
    on_phase = None
    if args.progress:
        def on_phase(p):
            mm = p.min_margin
            _say(f"phase {p.j}: size={p.sample_size} stopped={p.stopped} "
                 f"min_margin={'-' if mm is None else f'{mm:.6g}'} {p.elapsed_ms:.1f}ms")
    if args.sketch:
        from .cmsketch import run_progressive_cm

        split = (args.delta1, args.delta2) if args.delta1 is not None else None
        out = run_progressive_cm(ds, params, args.seed, eps_B=args.eps_b, delta_split=split,
                                 geometric_factor=args.geometric, extend=args.extend, guard=args.guard,
                                 on_phase=on_phase)
    else:
        out = run_progressive(ds, params, args.seed, geometric_factor=args.geometric, extend=args.extend,
                              guard=args.guard, on_phase=on_phase)
    _emit(args, {"command": "progressive", "sketch": args.sketch, "seed": args.seed,
                 **out.to_dict(timings=args.timings)})
    _write(args.trace_csv, out.trace_csv())
    _say(f"{out.terminal} at phase {out.stop_phase} with {out.sample_size} transactions "
         f"(bound {out.schedule.bound}, j_max {out.schedule.j_max})")


def cmd_gen(args) -> None:
    if args.kind == "lowerbound":
        ds = gen_lowerbound_dataset(args.k, args.ell, args.p_k, args.eps, args.transactions, args.seed)
    elif args.kind == "planted":
        ds = gen_planted_dataset(args.ell, args.n, args.copies)
    else:
        ds = gen_zipf_dataset(args.n, args.transactions, args.seed, args.scale, args.exponent)
    save_fimi(ds, args.path)
    # FIMI has no way to write an empty transaction that survives parsing
    empty = sum(1 for t in ds.transactions if not t)
    _emit(argparse.Namespace(output=None), {"command": f"gen {args.kind}", "path": str(args.path),
                                            "transactions": len(ds) - empty, "empty_dropped": empty,
                                            "n": ds.universe_size})
    _say(f"wrote {len(ds) - empty} transactions to {args.path}"
         + (f" ({empty} empty transactions omitted)" if empty else ""))


def cmd_experiment(args) -> None:
    jobs = args.jobs or default_jobs()
    if args.kind == "lowerbound":
        if not args.sizes:
            raise ParameterError("--sizes is required for the lowerbound experiment")
        curve = run_lowerbound_experiment(args.k[0], args.ell, args.p_k, args.eps, args.transactions, args.sizes,
                                          args.trials, args.seed, delta=args.delta, w=args.w, jobs=jobs,
                                          guard=args.guard)
        _emit(args, {"command": "experiment lowerbound", "curve": [{"size": s, "failure_rate": f} for s, f in curve]})
        _write(args.curve_csv, curve_csv(curve))
        _say("size failure_rate\n" + "\n".join(f"{s} {f:.4f}" for s, f in curve))
        return
    if not args.dataset:
        raise ParameterError("a dataset path is required")
    all_params = [ApproxParams(k, args.w, args.eps, args.delta) for k in args.k]
    ds = _load(args)
    summaries = []
    for params in all_params:
        if args.kind == "static":
            s = run_static_experiment(ds, params, args.trials, args.seed, jobs=jobs, cache_dir=args.cache_dir,
                                      guard=args.guard)
        else:
            split = (args.delta1, args.delta2) if args.delta1 is not None else None
            s = run_progressive_experiment(ds, params, args.trials, args.seed, use_sketch=args.sketch,
                                           eps_B=args.eps_b, delta_split=split, geometric_factor=args.geometric,
                                           extend=args.extend, jobs=jobs, cache_dir=args.cache_dir,
                                           guard=args.guard)
        summaries.append(s)
        _say(f"K={params.K}: success {s.successes}/{s.trials}, exact match {s.exact_match_rate:.2f}, "
             f"recovery {s.mean_recovery:.3f}, max error {s.max_worst_p3_error:.4g}")
    _emit(args, {"command": f"experiment {args.kind}", "summaries": [s.to_dict() for s in summaries]})
    if args.trials_csv:
        _write(args.trials_csv, "".join(
            s.trials_csv() if i == 0 else s.trials_csv().split("\n", 1)[1] for i, s in enumerate(summaries)))
    if args.kind == "progressive":
        _write(args.stop_csv, stop_size_csv(summaries))


# ---------------------------------------------------------------------------
# parser


def _mining_flags(p, k_many: bool = False) -> None:
    if k_many:
        p.add_argument("--k", type=int, nargs="+", required=True, help="one or more K values")
    else:
        p.add_argument("--k", type=int, required=True)
    p.add_argument("--w", type=int, default=1)
    p.add_argument("--eps", type=float, default=0.02)
    p.add_argument("--delta", type=float, default=0.1)


def _common(p) -> None:
    p.add_argument("--output", "-o", help="write JSON here instead of stdout")
    p.add_argument("--guard", type=int, default=DEFAULT_GUARD, help="max subsets enumerated per count")
    p.add_argument("--universe-size", type=int, default=0, help="declared number of items n")


def _sketch_flags(p) -> None:
    p.add_argument("--sketch", action="store_true", help="use the count-min filter stopping test")
    p.add_argument("--eps-b", type=float, default=None, help="filter overestimate tolerance (default eps/4)")
    p.add_argument("--delta1", type=float, default=None)
    p.add_argument("--delta2", type=float, default=None)
    p.add_argument("--geometric", type=float, default=1.0, help="geometric growth factor for phase sizes")
    p.add_argument("--extend", action="store_true", help="top up the previous sample instead of redrawing")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="topkfi", description="Approximate top-K frequent itemsets from random samples.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mine-exact", help="exact top-K of a whole dataset")
    p.add_argument("dataset")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--w", type=int, default=1)
    _common(p)
    p.set_defaults(func=cmd_mine_exact)

    p = sub.add_parser("bound", help="sample-size bound and phase schedule")
    p.add_argument("--n", type=int, required=True, help="number of items")
    p.add_argument("--dataset-size", type=int, default=None)
    p.add_argument("--geometric", type=float, default=1.0)
    p.add_argument("--output", "-o")
    _mining_flags(p)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("sample-mine", help="top-K of one static-bound-size sample")
    p.add_argument("dataset")
    _mining_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=None, help="override the sample size")
    _common(p)
    p.set_defaults(func=cmd_sample_mine)

    p = sub.add_parser("progressive", help="progressive sampling with early stopping")
    p.add_argument("dataset")
    _mining_flags(p)
    p.add_argument("--seed", type=int, default=0)
    _sketch_flags(p)
    p.add_argument("--trace-csv", help="write the phase trace as CSV")
    p.add_argument("--progress", action="store_true", help="print each phase to stderr")
    p.add_argument("--timings", action="store_true", help="include elapsed times in the JSON")
    _common(p)
    p.set_defaults(func=cmd_progressive)

    p = sub.add_parser("gen", help="write a synthetic dataset in FIMI format")
    p.add_argument("kind", choices=["lowerbound", "planted", "zipf"])
    p.add_argument("path")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--ell", type=int, default=4)
    p.add_argument("--p-k", type=float, default=0.3)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--copies", type=int, default=1000, help="copies of the wide transaction (planted)")
    p.add_argument("--transactions", type=int, default=10_000)
    p.add_argument("--scale", type=float, default=0.5)
    p.add_argument("--exponent", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("experiment", help="multi-trial guarantee checks")
    p.add_argument("kind", choices=["static", "progressive", "lowerbound"])
    p.add_argument("dataset", nargs="?")
    _mining_flags(p, k_many=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=0, help="worker processes (default: logical cores)")
    p.add_argument("--cache-dir", help="directory for cached ground-truth tables")
    p.add_argument("--trials-csv")
    p.add_argument("--stop-csv", help="K, w, stop size and bound table (progressive)")
    p.add_argument("--curve-csv", help="size, failure_rate table (lowerbound)")
    p.add_argument("--ell", type=int, default=1000)
    p.add_argument("--p-k", type=float, default=0.3)
    p.add_argument("--transactions", type=int, default=20_000)
    p.add_argument("--sizes", type=int, nargs="+")
    _sketch_flags(p)
    _common(p)
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except UsageError as e:
        _say(str(e))
        return EXIT_USAGE
    except ParameterError as e:
        _say(f"error: {e}")
        return EXIT_USAGE
    except DataError as e:
        _say(f"data error: {e}")
        return EXIT_DATA
    except ResourceLimitError as e:
        _say(f"resource limit: {e}")
        return EXIT_RESOURCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
