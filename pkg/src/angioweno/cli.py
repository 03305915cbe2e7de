"""Command line entry point: ``angioweno run | report | verify``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, apply_overrides, parse_config, split_line

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3  # solver abort, or a failed verification suite
EXIT_IO = 4

log = logging.getLogger("angioweno")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="angioweno", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="integrate the configured scenario")
    r.add_argument("--config", type=Path, help="key=value configuration file")
    r.add_argument("--out", type=Path, help="output directory (overrides the config key)")
    r.add_argument("--override", action="append", default=[], metavar="KEY=VALUE", help="repeatable")
    r.add_argument("--threads", type=int, help="worker threads for the right-hand side")
    r.add_argument("--progress", type=int, default=0, metavar="N", help="log every N steps")

    rep = sub.add_parser("report", help="summarise a finished run")
    rep.add_argument("out", type=Path, nargs="?", default=Path("run_output"))

    v = sub.add_parser("verify", help="run the exactness, convergence and positivity checks")
    v.add_argument("--quick", action="store_true", help="skip the slower refinement studies")
    return p


def load_config(path: Path | None, overrides: list[str], threads: int | None, out: Path | None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        cfg = parse_config(path.read_text())
    extra = [split_line(o) for o in overrides]
    if threads is not None:
        extra.append(("threads", str(threads)))
    if out is not None:
        extra.append(("out", str(out)))
    return apply_overrides(cfg, extra) if extra else cfg


def cmd_run(args) -> int:
    from .driver import run_simulation

    try:
        cfg = load_config(args.config, args.override, args.threads, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        res = run_simulation(cfg, progress_every=args.progress)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"{res.status}: {len(res.snapshots)} snapshots, dt={res.dt:.6g}, {res.nsteps} steps, {res.wall_time:.1f} s -> {res.out_dir}")
    if res.abort:
        print(f"abort at step {res.abort['step']} (t={res.abort['t']:.6g}): {res.abort['reason']}", file=sys.stderr)
        return EXIT_ABORT
    return EXIT_OK


def cmd_report(args) -> int:
    from .driver import format_report, load_manifest

    try:
        manifest, diag = load_manifest(args.out)
    except (OSError, ValueError) as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(format_report(manifest, diag))
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verification import run_checks

    ok = True
    for check in run_checks(quick=args.quick):
        print(check.line())
        ok &= check.passed
    return EXIT_OK if ok else EXIT_ABORT


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return {"run": cmd_run, "report": cmd_report, "verify": cmd_verify}[args.verb](args)
