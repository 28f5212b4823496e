"""Command-line entry point.

    annealed-langevin run --config <path> [--parallel] [--out <dir>] [--threads N]
    annealed-langevin verify
    annealed-langevin constants --config <path>

Exit codes: 0 success, 1 config error, 2 runtime failure, 3 verification failure.
The ``ANNEALED_LANGEVIN_THREADS`` environment variable sets the per-cell
thread count when ``--threads`` is absent.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .sampler import THREADS_ENV

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3

logger = logging.getLogger("annealed_langevin")


def _cmd_run(args) -> int:
    from .experiment import run_experiment

    config = load_config(args.config)
    try:
        written = run_experiment(config, out_dir=args.out, parallel=args.parallel,
                                 n_threads=args.threads)
    except (ValueError, TypeError) as err:
        # invalid method/path combinations surface here before any simulation
        raise ConfigError(str(err)) from err
    for fname in written:
        print(fname)
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .oracles import verification_checks

    results = verification_checks()
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_VERIFY


def _cmd_constants(args) -> int:
    from .experiment import constants_table

    config = load_config(args.config)
    try:
        rows = constants_table(config)
    except (ValueError, TypeError) as err:
        raise ConfigError(str(err)) from err
    print(f"{'method':<12} {'tau':>12} {'a_tau':>14} {'L_tau':>14} {'h':>14}")
    for m, tau, a, lip, h in rows:
        print(f"{m:<12} {tau:>12.6g} {a:>14.6g} {lip:>14.6g} {h:>14.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="annealed-langevin",
                                     description="Annealed Langevin sampling experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a method x T sweep and write CSV files")
    p.add_argument("--config", required=True)
    p.add_argument("--parallel", action="store_true", help="run (method, T) cells in processes")
    p.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    p.add_argument("--threads", type=int, default=None,
                   help=f"threads per cell (default: ${THREADS_ENV} or 1)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("verify", help="run the oracle suite")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("constants", help="print a_tau, L_tau and h per method")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_constants)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as err:  # noqa: BLE001 - mapped to the runtime exit code
        logger.debug("runtime failure", exc_info=True)
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
