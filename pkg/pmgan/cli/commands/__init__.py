"""One module per subcommand; each exposes ``register(subparsers)``."""

from pmgan.cli.commands import evaluate, gradcheck, report, synth, train

COMMANDS = (synth, train, evaluate, gradcheck, report)

__all__ = ["COMMANDS"]
