"""Command-line entry point"""

import argparse
import logging
import sys
from typing import Optional, Sequence

from dualmetric.commands import nmf_demo, sweeps, synth, train
from dualmetric.commands.common import build_run_config
from dualmetric.core.config import settings
from dualmetric.core.errors import DMLError
from dualmetric.core.log_format import configure_logging, format_reason

logger = logging.getLogger(__name__)

VERSION = "0.1.0"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualmetric",
        description="Cross-domain recommendation with dual metric learning: training and experiments",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    parser.add_argument("--log-level", dest="log_level", default=None, help="Logging level (default: DML_LOG_LEVEL)")
    subparsers = parser.add_subparsers(dest="command", required=True)
    synth.register(subparsers)
    train.register(subparsers)
    sweeps.register(subparsers)
    nmf_demo.register(subparsers)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments, run one command and map failures to exit codes.

    Returns:
        0 on success, 2 for a reported error (one ``error reason=... detail=...``
        line on stderr), 1 for an unexpected exception
    """
    args = build_parser().parse_args(argv)
    configure_logging((args.log_level or settings.LOG_LEVEL).upper())
    try:
        cfg = build_run_config(args)
        logger.info("Running %s (seed=%s, out=%s)", cfg.command, cfg.seed, cfg.out)
        return args.func(cfg)
    except DMLError as exc:
        logger.error("%s failed: %s", args.command, exc.message)
        print(f"error {format_reason(exc)}", file=sys.stderr)
        return 2
    except Exception as exc:
        logger.error("Unhandled exception in %s", args.command, exc_info=exc)
        print(f"error {format_reason(exc)}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
