"""``pmgan gradcheck``: finite-difference verification of every gradient."""

import argparse

from structlog import get_logger

from pmgan.cli.common import add_common, manifest_path, output_dir
from pmgan.cli.config_loader import Option, coerce, resolve
from pmgan.cli.manifest import RunRecorder
from pmgan.core.errors import ConfigurationError
from pmgan.services import gradcheck as checks

logger = get_logger(__name__)

NAME = "gradcheck"
DEFAULTS = {"scope": "all", "seed": 0, "step": checks.STEP, "tolerance": checks.TOLERANCE}
OPTIONS = [
    Option("scope", "--scope", str, "op, model or all"),
    Option("seed", "--seed", int, "seed of the random operands"),
    Option("step", "--step", float, "central-difference step h"),
    Option("tolerance", "--tolerance", float, "maximum accepted relative error"),
]


def parse_corrupt(text: str) -> tuple[str, float]:
    """``NAME=OFFSET`` into a gradient-corruption request."""
    name, sep, offset = text.partition("=")
    if not sep or not name:
        raise ConfigurationError(f"--corrupt expects NAME=OFFSET, got '{text}'")
    try:
        return name, float(offset)
    except ValueError:
        raise ConfigurationError(f"--corrupt offset is not a number: '{offset}'") from None


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(NAME, help="compare tape gradients with finite differences")
    for option in OPTIONS:
        option.add_to(parser)
    parser.add_argument(
        "--corrupt",
        default=None,
        metavar="NAME=OFFSET",
        help="test hook: add OFFSET to the analytic gradient of parameter NAME",
    )
    add_common(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    resolved = resolve(DEFAULTS, args, args.config)
    seed = coerce(resolved, "seed", int)
    step = coerce(resolved, "step", float)
    tolerance = coerce(resolved, "tolerance", float)
    corrupt = parse_corrupt(args.corrupt) if args.corrupt else None

    out = output_dir(args)
    recorder = RunRecorder(NAME, resolved, seed=seed)
    entries = checks.gradcheck(
        resolved["scope"], seed=seed, step=step, tolerance=tolerance, corrupt=corrupt
    )

    width = max(len(f"{e.check}:{e.parameter}") for e in entries)
    print(f"status  {'check:parameter':<{width}}  {checks.METRIC}")
    for entry in entries:
        status = "PASS" if entry.passed else "FAIL"
        print(f"{status}  {entry.check + ':' + entry.parameter:<{width}}  {entry.max_scaled_error:.3e}")
    failed = [e for e in entries if not e.passed]
    print(f"{len(entries) - len(failed)}/{len(entries)} passed")

    exit_code = 1 if failed else 0
    recorder.finish(manifest_path(out, NAME), exit_code=exit_code)
    return exit_code
