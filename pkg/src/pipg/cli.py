"""``bench`` command-line entry point.

Subcommands::

    bench build     --T 25 --out problem.json
    bench reference --T 25 --out reference.json
    bench trace     --T 25 --solver pipg-var --max-iter 10000 [--ref reference.json] [--out trace.csv]
    bench sweep     --config sweep.json [--out sweep.csv]

CSV goes to ``--out`` or standard output. The sweep's worker count comes
from ``--workers`` or the ``PIPG_BENCH_WORKERS`` environment variable.
Exit status is 0 on success and 1 on a configuration or certification
failure.
"""

import argparse
import json
import logging
import os
import sys

from .bench import (
    SOLVERS,
    WORKERS_ENV,
    CertificationError,
    ExperimentConfig,
    ReferenceSolution,
    compute_reference,
    run_sweep,
    run_trace,
    sweep_csv,
    trace_csv,
)
from .mpc import build_benchmark, lift

log = logging.getLogger("pipg.bench")


def _emit(text, path):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _cmd_build(args):
    problem = lift(build_benchmark(args.T))
    _emit(problem.to_json(), args.out)
    return 0


def _cmd_reference(args):
    problem = lift(build_benchmark(args.T))
    ref = compute_reference(problem, tol=args.tol, max_iterations=args.max_iter)
    ref.meta = {"T": args.T}
    _emit(json.dumps(ref.to_dict(), indent=1), args.out)
    return 0


def _cmd_trace(args):
    problem = lift(build_benchmark(args.T))
    reference = ReferenceSolution.load(args.ref) if args.ref else None
    if reference is not None and len(reference.z_star) != problem.n:
        raise ValueError(f"reference has {len(reference.z_star)} entries, problem has {problem.n}")
    trace = run_trace(problem, args.solver, max_k=args.max_iter, reference=reference)
    _emit(trace_csv(trace), args.out)
    return 0


def _cmd_sweep(args):
    config = ExperimentConfig.load(args.config)
    workers = args.workers
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    rows = run_sweep(config, workers=workers)
    _emit(sweep_csv(rows), args.out or config.output)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="bench", description="PIPG benchmark harness")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="emit the lifted benchmark QP as JSON")
    p.add_argument("--T", type=int, required=True, help="horizon length")
    p.add_argument("--out", help="output path (default: stdout)")
    p.set_defaults(func=_cmd_build)

    p = sub.add_parser("reference", help="compute a certified reference solution")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--out", help="output JSON path (default: stdout)")
    p.add_argument("--tol", type=float, default=1e-10, help="KKT residual each solver must reach")
    p.add_argument("--max-iter", type=int, default=1_000_000)
    p.set_defaults(func=_cmd_reference)

    p = sub.add_parser("trace", help="per-iteration convergence trace as CSV")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--solver", choices=SOLVERS, required=True)
    p.add_argument("--max-iter", type=int, required=True)
    p.add_argument("--ref", help="reference solution JSON for the distance columns")
    p.add_argument("--out", help="output CSV path (default: stdout)")
    p.set_defaults(func=_cmd_trace)

    p = sub.add_parser("sweep", help="projections-to-tolerance sweep as CSV")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", help="output CSV path (default: the config's output, else stdout)")
    p.add_argument("--workers", type=int, help=f"worker threads (default: ${WORKERS_ENV} or 1)")
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "T", 1) < 1:
        print("bench: error: --T must be positive", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except CertificationError as exc:
        print(f"bench: certification failed: {exc}", file=sys.stderr)
    except (ValueError, TypeError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"bench: error: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
