"""Command line entry point: ``mjbp {sweep,tradeoff,cdf,selftest}``.

Failures print one machine-readable line to stderr::

    error: kind=<ExceptionName> line=<n or -> message=<text>

and exit with status 2 for configuration errors and 1 otherwise.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import ConfigError, parse_config, parse_config_text
from .experiments import (
    cdf_bounds,
    emit_cdf_csv,
    emit_csv,
    emit_meta,
    run_sweep,
    tradeoff_sweep,
)

log = logging.getLogger("mjbp")


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config file (defaults apply when omitted)")
    common.add_argument("--out", help="output CSV path (stdout when omitted)")
    common.add_argument("--seed", type=int, help="master seed, overrides the config")
    common.add_argument("--threads", type=int, default=1, help="worker processes")
    common.add_argument("--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mjbp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep", parents=[common], help="utility versus the configured sweep axis")
    sub.add_parser("tradeoff", parents=[common], help="rate-energy tradeoff over gamma")
    sub.add_parser("cdf", parents=[common], help="CDFs of the ergodic-rate bounds")
    sub.add_parser("selftest", parents=[common], help="fast internal consistency checks")
    return parser


def _load(args):
    config = parse_config(args.config) if args.config else parse_config_text("")
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be a nonnegative integer")
        config = config.with_overrides(experiment={"master_seed": args.seed})
    if args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    return config


def _write(args, emit, payload):
    if args.out:
        emit(payload, args.out)
        return
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "out.csv")
        emit(payload, path)
        with open(path) as fh:
            sys.stdout.write(fh.read())


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "selftest":
            from .selftest import run_selftest

            return 0 if run_selftest(verbose=args.verbose, seed=args.seed or 0) else 1
        config = _load(args)
        if args.command in ("sweep", "tradeoff"):
            fn = run_sweep if args.command == "sweep" else tradeoff_sweep
            rows = fn(config, threads=args.threads)
            for r in rows:
                log.info("%s %s=%g seed=%d utility=%.6g %s (%.2fs)",
                         r.scheme, r.sweep, r.value, r.seed, r.utility, r.status, r.runtime_s)
            _write(args, emit_csv, rows)
            if args.out:
                emit_meta(args.out + ".meta.json", args.command, config, rows)
            failed = [r for r in rows if r.status != "ok"]
            if failed:
                log.warning("%d of %d runs failed; see the status column", len(failed), len(rows))
        else:
            table = cdf_bounds(config)
            _write(args, emit_cdf_csv, table)
            if args.out:
                emit_meta(args.out + ".meta.json", "cdf", config,
                          extra={"T": config.dims.T, "samples": config.cdf_samples,
                                 "instances": config.cdf_instances, "policy": config.cdf_policy})
    except ConfigError as exc:
        line = exc.line if exc.line is not None else "-"
        print(f"error: kind=ConfigError line={line} message={exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        if args.verbose:
            log.exception("command failed")
        print(f"error: kind={type(exc).__name__} line=- message={exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
