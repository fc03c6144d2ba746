"""Operator command line: solve, export-mps, synth, bench, compare, serve.

Exit codes: 0 success, 1 validation error, 2 solver failure, 3 I/O error.
If SCUC_OUT_DIR is set, relative output paths are resolved against it.
All file outputs are written atomically (temp file then rename).
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
import time

from .benchmark import (
    EnvironmentProfile,
    compare,
    report_plot_data,
    report_to_csv,
    run_trials,
    trials_from_csv,
    trials_to_csv,
)
from .errors import (
    ArgumentError,
    DisconnectedNetworkError,
    MpsParseError,
    NumericalError,
    SchemaError,
    ScucError,
    ValidationError,
)
from .formats import export_mps, solution_from_result
from .instance import SolverOptions, parse_instance, serialize_instance, synth_instance

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SOLVER = 2
EXIT_IO = 3


def _out_path(path: str) -> str:
    base = os.environ.get("SCUC_OUT_DIR")
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


def _write_atomic(path: str, text: str):
    path = _out_path(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".scuc-tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read(path: str) -> str:
    with open(path) as fh:
        return fh.read()


def _load_instance(path: str):
    return parse_instance(_read(path))


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scuc", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve an instance file")
    p.add_argument("instance")
    p.add_argument("--gap", type=float, default=0.005)
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="solution.json")

    p = sub.add_parser("export-mps", help="compile an instance and write MPS")
    p.add_argument("instance")
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="generate a synthetic instance")
    p.add_argument("--gens", type=int, required=True)
    p.add_argument("--buses", type=int, required=True)
    p.add_argument("--lines", type=int, required=True)
    p.add_argument("--horizon", type=int, default=24)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("bench", help="run timed Monte-Carlo solve trials")
    p.add_argument("instance")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--env-name", required=True)
    p.add_argument("--cpus", type=int, required=True)
    p.add_argument("--ram", type=float, required=True)
    p.add_argument("--processor", default="")
    p.add_argument("--gap", type=float, default=0.005)
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("compare", help="build a percent gain/loss report from trial CSVs")
    p.add_argument("csvs", nargs="+")
    p.add_argument("--baseline", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--plot-out", default=None)

    p = sub.add_parser("serve", help="start the solve service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--host", default="127.0.0.1")
    return ap


def main(argv=None) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    try:
        return _dispatch(args)
    except (SchemaError, ValidationError, DisconnectedNetworkError, ArgumentError, MpsParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ScucError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def _dispatch(args) -> int:
    from . import compiler as comp

    if args.command == "solve":
        from .mip import solve_mip

        inst = _load_instance(args.instance)
        opts = SolverOptions(
            rel_gap=args.gap, time_limit=args.time_limit, worker_count=args.workers
        )
        t0 = time.perf_counter()
        model = comp.compile(inst)
        t1 = time.perf_counter()
        result = solve_mip(model, opts)
        doc = solution_from_result(model, result, compile_seconds=t1 - t0)
        _write_atomic(args.out, doc.to_json() + "\n")
        print(
            f"{result.status}: objective={result.objective:.6f} "
            f"bound={result.best_bound:.6f} gap={result.rel_gap_achieved:.6g} "
            f"nodes={result.nodes_explored}"
        )
        return EXIT_OK

    if args.command == "export-mps":
        inst = _load_instance(args.instance)
        model = comp.compile(inst)
        _write_atomic(args.out, export_mps(model, name=inst.name))
        return EXIT_OK

    if args.command == "synth":
        inst = synth_instance(
            args.gens, args.buses, args.lines, T=args.horizon, seed=args.seed
        )
        _write_atomic(args.out, serialize_instance(inst) + "\n")
        return EXIT_OK

    if args.command == "bench":
        inst = _load_instance(args.instance)
        env = EnvironmentProfile(
            name=args.env_name,
            cpu_count=args.cpus,
            ram_gb=args.ram,
            processor=args.processor,
        )
        opts = SolverOptions(
            rel_gap=args.gap, time_limit=args.time_limit, worker_count=args.workers
        )
        records = run_trials(inst, opts, args.trials, env)
        _write_atomic(args.out, trials_to_csv(records))
        n_fail = sum(1 for r in records if not r.ok)
        print(f"wrote {len(records)} trials ({n_fail} failed) to {args.out}")
        return EXIT_OK if n_fail == 0 else EXIT_SOLVER

    if args.command == "compare":
        records = []
        for path in args.csvs:
            records.extend(trials_from_csv(_read(path)))
        report = compare(records, args.baseline)
        _write_atomic(args.out, report_to_csv(report))
        if args.plot_out:
            _write_atomic(args.plot_out, report_plot_data(report))
        for row in report.rows:
            print(f"{row.environment}: mean={row.mean_s:.4f}s gain={row.percent_gain:+.2f}%")
        return EXIT_OK

    if args.command == "serve":
        from .service import serve

        serve(port=args.port, worker_count=args.workers, host=args.host)
        return EXIT_OK

    raise ArgumentError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
