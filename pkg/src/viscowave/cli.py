"""Command line entry point: ``viscowave <subcommand> --config PATH``.

Exit codes: 0 success (a detected blow-up counts as success), 1 internal
error, 2 schema or configuration error, 3 numerical fault, 4 violated hard
invariant.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import experiment as ex
from .energy import read_csv, check_invariants
from .grid import NonFiniteFieldError

log = logging.getLogger("viscowave")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="viscowave", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ex.KINDS:
        sp = sub.add_parser(name, help=f"{name} experiment")
        sp.add_argument("--config", required=True, metavar="PATH")
        sp.add_argument("--out", metavar="DIR", help="output directory (overrides output_dir)")
        sp.add_argument("--seed", type=int, metavar="N")
        sp.add_argument("--threads", type=int, metavar="N",
                        help="worker processes; falls back to VISCOWAVE_THREADS, then 1")
    vc = sub.add_parser("validate-csv", help="re-check the invariants of an energy CSV")
    vc.add_argument("csv", metavar="PATH")
    vc.add_argument("--g-tol", type=float, default=1e-8,
                    help="relative tolerance for the G monotonicity check")
    return ap


def _validate_csv(path, g_tol) -> int:
    try:
        cols = read_csv(path)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ex.EXIT_SCHEMA
    problems = check_invariants(cols, g_tol=g_tol)
    for v in problems:
        print(f"{'FAIL' if v.hard else 'warn'} {v.name}: {v.message}")
    hard = any(v.hard for v in problems)
    print(f"rows={len(cols['t'])} hard_violations={sum(v.hard for v in problems)} "
          f"soft_violations={sum(not v.hard for v in problems)}")
    return ex.EXIT_INVARIANT if hard else ex.EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "validate-csv":
        return _validate_csv(args.csv, args.g_tol)
    try:
        threads = ex.resolve_threads(args.threads)
        cfg = ex.load_config(args.config, {"seed": args.seed, "output_dir": args.out})
        if cfg.kind != args.command:
            log.info("config kind %r overridden by subcommand %r", cfg.kind, args.command)
        summary = ex.execute(cfg, cfg.raw["output_dir"], threads, kind=args.command)
    except ex.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return ex.EXIT_SCHEMA
    except (ex.NumericalFault, NonFiniteFieldError, FloatingPointError) as exc:
        print(f"numerical fault: {exc}", file=sys.stderr)
        return ex.EXIT_NUMERICAL
    except ex.InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return ex.EXIT_INVARIANT
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to an exit code
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return ex.EXIT_INTERNAL
    for key in ("status", "regime", "E0", "T_obs", "threshold", "max_relative_discrepancy",
                "monotone_in_delta"):
        if key in summary:
            print(f"{key}={ex._fmt(summary[key])}")
    return ex.EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
