"""Process entry point."""

import sys
from typing import Optional, Sequence

from structlog import get_logger

from pmgan.cli.parser import build_parser
from pmgan.core.config import settings
from pmgan.core.errors import PmGanError
from pmgan.core.logging import configure_logging

logger = get_logger(__name__)

EXIT_INTERNAL = 1
EXIT_ERROR = 2


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and map failures to ``error[<code>]: <detail>`` on stderr."""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level or settings.log_level, settings.log_json)

    try:
        return args.handler(args)
    except PmGanError as exc:
        logger.debug("command failed", command=args.command, code=exc.code)
        print(f"error[{exc.code}]: {exc.message}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:
        logger.error("unhandled exception", command=args.command, exc_info=True)
        print(f"error[internal]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
