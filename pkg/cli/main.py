"""
Command Line Entry Point.

``python -m cli <command> ...`` dispatches to one of the commands in
``cli.commands`` and turns its result into a process exit code.
"""

import argparse
import logging
import sys
from typing import List, Optional

from dotenv import load_dotenv

from utils.logging_setup import configure_logging
from .commands import COMMANDS

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssmradnet",
        description="Streaming selective-SSM radar perception: simulate, train, eval, infer, bench"
    )
    parser.add_argument('--log-level', type=str, default=None, help='Override SSMRADNET_LOG_LEVEL')
    subparsers = parser.add_subparsers(dest='command', required=True)
    for command_cls in COMMANDS:
        command = command_cls()
        sub = subparsers.add_parser(command.name, help=command.help)
        command.add_arguments(sub)
        sub.set_defaults(handler=command)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse ``argv`` and run one command.

    Returns:
        Exit code: 0 success, 2 config error, 3 format error, 4 numerical abort
    """
    load_dotenv()
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    result = args.handler.execute(args)
    if result["status"] != "success":
        print(f"error: {result['error']}", file=sys.stderr)
    return result["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
