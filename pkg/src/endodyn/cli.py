"""Command line entry point: ``endodyn simulate|diagnose|sweep --config FILE``."""
from __future__ import annotations

import argparse
import logging
import sys

from .commands import run_diagnose, run_simulate, run_sweep
from .config import load_config
from .errors import ConfigError, EndodynError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_VIOLATION = 4

log = logging.getLogger("endodyn")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed {text} is not an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="endodyn",
        description="Simulate and diagnose random averaging dynamics x(k+1) = W(k+1) x(k).",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "write one trajectory CSV per replica and a summary JSON"),
        ("diagnose", "run the configured checks and write diagnostics JSON"),
        ("sweep", "sweep one model parameter over a seed list and write a CSV table"),
    ):
        p = sub.add_parser(name, help=help_text, parents=[common])
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=_u64, default=None, help="override master_seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed)
        if args.command == "simulate":
            summary = run_simulate(cfg, args.out)
            for rep in summary["replicas"]:
                if rep["comparison"]["verdict"] == "warning":
                    log.warning("replica %d: %s", rep["replica"], rep["comparison"]["detail"])
            return EXIT_OK
        if args.command == "diagnose":
            doc, hard = run_diagnose(cfg, args.out)
            for name, verdict in doc["verdicts"].items():
                log.info("%s: %s", name, verdict)
                if verdict == "warning":
                    log.warning("%s: not converged in at least one run", name)
            return EXIT_VIOLATION if hard else EXIT_OK
        run_sweep(cfg, args.out)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EndodynError, ValueError, FloatingPointError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
