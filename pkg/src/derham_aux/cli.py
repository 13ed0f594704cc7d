"""Command-line entry point.

    derham-aux run --mode source --problem maxwell --domain cube --level 2
    derham-aux mesh-info --domain hole --level 3
    derham-aux tables --which 3 --max-level 2 --out-dir tables/
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .experiments import (
    LARGE_LEVEL,
    MODES,
    PROBLEMS,
    TABLES,
    ExperimentConfig,
    dump_operators,
    mesh_info,
    reproduce_tables,
    run_experiment,
)
from .precond import PRECONDITIONERS

log = logging.getLogger("derham_aux")

THREADS_ENV = "DERHAM_THREADS"


def _thread_limit():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(value))


def _add_run_args(p: argparse.ArgumentParser):
    p.add_argument("--mode", choices=MODES, default="source")
    p.add_argument("--problem", choices=sorted(PROBLEMS), default="maxwell")
    p.add_argument("--domain", default="cube", help="cube or hole")
    p.add_argument("--level", type=int, default=1)
    p.add_argument("--solver", choices=("cg", "mg"), default="cg")
    p.add_argument("--precond", choices=PRECONDITIONERS, default="none")
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--nev", type=int, default=20)
    p.add_argument("--block", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", choices=("json", "csv"), default="json")
    p.add_argument("--out", type=Path, help="write the report here instead of stdout")
    p.add_argument("--allow-large", action="store_true",
                   help=f"permit level {LARGE_LEVEL} runs (hundreds of thousands of unknowns)")
    p.add_argument("--dump-operators", type=Path, metavar="DIR",
                   help="also write the operator matrices as Matrix Market files")
    p.add_argument("--matrix", type=Path, metavar="FILE",
                   help="JSON list of configurations to run instead of the flags")
    p.add_argument("--workers", type=int, default=1, help="processes for --matrix batches")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="derham-aux",
                                     description="Auxiliary-space solvers for d*d problems.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run_args(sub.add_parser("run", help="run one experiment"))

    mi = sub.add_parser("mesh-info", help="entity counts and Euler characteristic")
    mi.add_argument("--domain", default="cube")
    mi.add_argument("--level", type=int, default=1)

    tb = sub.add_parser("tables", help="rebuild iteration/eigenvalue tables as CSV")
    tb.add_argument("--which", type=int, nargs="+", choices=sorted(TABLES), required=True)
    tb.add_argument("--max-level", type=int, default=3)
    tb.add_argument("--seed", type=int, default=0)
    tb.add_argument("--out-dir", type=Path, help="directory for table_<id>.csv (stdout if omitted)")
    tb.add_argument("--allow-large", action="store_true")
    return parser


_CONFIG_KEYS = ("problem", "domain", "level", "mode", "solver", "precond", "c", "tol",
                "nev", "block", "seed", "output")


def _config_from_args(args) -> ExperimentConfig:
    return ExperimentConfig(**{k: getattr(args, k) for k in _CONFIG_KEYS})


def _emit_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if "eigenpairs" in report:
        w.writerow(["index", "lambda", "lambda_tilde", "lambda_aux", "type"])
        for i, p in enumerate(report["eigenpairs"]):
            w.writerow([i, p["lambda"], p["lambda_tilde"], p["lambda_aux"], p["type"]])
    else:
        flat = {k: v for k, v in report.items() if not isinstance(v, (list, dict))}
        w.writerow(flat.keys())
        w.writerow(flat.values())
    return buf.getvalue()


def _render(report: dict, fmt: str) -> str:
    if fmt == "csv":
        return _emit_csv(report)
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def _run_one(cfg_dict: dict) -> dict:
    return run_experiment(ExperimentConfig(**cfg_dict))


def _check_large(level: int, allow: bool, parser):
    if level >= LARGE_LEVEL and not allow:
        parser.error(f"level {level} needs --allow-large")


def _cmd_run(args, parser) -> int:
    if args.matrix is None:
        try:
            cfg = _config_from_args(args)
        except ValueError as exc:
            parser.error(str(exc))
        _check_large(cfg.level, args.allow_large, parser)
        if args.dump_operators is not None and cfg.mode != "mesh-info":
            for path in dump_operators(cfg, args.dump_operators):
                log.info("wrote %s", path)
        return run(cfg, args.out)

    configs = json.loads(args.matrix.read_text())
    try:
        cfgs = [ExperimentConfig(**c) for c in configs]
    except (TypeError, ValueError) as exc:
        parser.error(f"bad entry in {args.matrix}: {exc}")
    for c in cfgs:
        _check_large(c.level, args.allow_large, parser)
    dicts = [dict(zip(_CONFIG_KEYS, (getattr(c, k) for k in _CONFIG_KEYS))) for c in cfgs]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            reports = list(pool.map(_run_one, dicts))
    else:
        reports = [_run_one(d) for d in dicts]
    text = json.dumps(reports, indent=2, sort_keys=True) + "\n"
    if args.out is not None:
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0 if all(r["converged"] for r in reports) else 1


def _cmd_mesh_info(args, parser) -> int:
    try:
        info = mesh_info(args.domain, args.level)
    except ValueError as exc:
        parser.error(str(exc))
    sys.stdout.write(json.dumps(info, indent=2, sort_keys=True) + "\n")
    return 0


def _cmd_tables(args, parser) -> int:
    _check_large(args.max_level, args.allow_large, parser)
    for which in args.which:
        text = reproduce_tables(which, args.max_level, args.out_dir, seed=args.seed)[which]
        if args.out_dir is None:
            sys.stdout.write(f"# table {which}\n{text}")
        else:
            log.info("wrote %s", args.out_dir / f"table_{which}.csv")
    return 0


def run(config: ExperimentConfig, out=None) -> int:
    """Run one configuration, write its report to ``out`` (stdout if None).

    Returns the exit code: 0 when every solve converged, 1 otherwise.
    """
    report = run_experiment(config)
    text = _render(report, config.output)
    if out is not None:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0 if report["converged"] else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "mesh-info": _cmd_mesh_info, "tables": _cmd_tables}[args.command]
    with _thread_limit():
        return handler(args, parser)


if __name__ == "__main__":
    sys.exit(main())
