"""Entry point for the product Littlewood–Paley laboratory."""

import argparse
import logging
import sys

from config import EXIT_CONFIG_ERROR, LOG_LEVEL, VERSION
from handlers import register_handlers


class LabArgumentParser(argparse.ArgumentParser):
    """Usage errors share the config-error exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = LabArgumentParser(prog="lplab", description="Numerical lab for product square functions")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    register_handlers(subparsers)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        level=logging.DEBUG if args.verbose else getattr(logging, LOG_LEVEL, logging.INFO),
    )
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
