"""
flexnet command line.

Usage:
    flexnet <command> [options]

Commands are registered per group from app.commands: network (metrics,
check-ergodic, bounds, transform), solve (solve-exact, simulate) and audit
(verify, sweep, monotonicity, battery, lemma-scan, coupling).

Exit codes: 0 all checks passed, 1 usage/IO/validation error, 2 a
verification row failed, 3 stability rejection.
"""
import argparse
import logging
import sys
from typing import List, Optional

from flexnet.app.commands import audit_commands, network_commands, solve_commands
from flexnet.app.commands.common import EXIT_REJECTED, EXIT_USAGE
from flexnet.app.config import get_config
from flexnet.app.exceptions import FlexnetError, StabilityRejected

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; 2 is reserved for failed checks here"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="flexnet",
        description="Stability, occupancy and flexibility lower bounds for dispatcher-server networks",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Flexibility metrics and ergodicity of a network file
  flexnet metrics net.json --format json
  flexnet check-ergodic net.json

  # Exact occupancy with a JSON sidecar next to the CSV
  flexnet solve-exact net.json --cap 30 --imax 10 --out occ.csv

  # Audit the bounds on a scaled family instance by simulation
  flexnet verify --family g1 --n 5 --method simulate --bounds thm3 --horizon 1e5

  # Family sweep, one row per (n, i)
  flexnet sweep --family g2 --n-min 1 --n-max 20 --out g2.csv --verbose
        """,
    )
    subparsers = parser.add_subparsers(dest="command", metavar="<command>")
    subparsers.required = True
    for register in (network_commands, solve_commands, audit_commands):
        register(subparsers)
    return parser


def configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, get_config().experiment.log_level, logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    configure_logging(args.verbose)

    try:
        return args.handler(args)
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return EXIT_USAGE
    except StabilityRejected as e:
        logger.error(f"Stability rejection: {e}")
        sys.stderr.write(f"{e}\n")
        return EXIT_REJECTED
    except (FlexnetError, OSError, ValueError) as e:
        logger.error(f"{type(e).__name__}: {e}", exc_info=True)
        return EXIT_USAGE
    except Exception as e:
        logger.error(f"Fatal error: {e}", exc_info=True)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
