"""Error hierarchy shared by every layer.

Each error carries a stable ``code`` so the CLI can print a machine-parsable
prefix (``error[<code>]: ...``) without knowing the concrete class.
"""

from typing import Optional, Sequence


class PmGanError(Exception):
    """Base class for all project errors."""

    code = "error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class DimensionError(PmGanError, ValueError):
    """Shapes of operands do not agree."""

    code = "dimension"

    def __init__(self, message: str, shapes: Sequence[Sequence[int]] = ()):
        if shapes:
            rendered = " vs ".join(str(tuple(s)) for s in shapes)
            message = f"{message}: {rendered}"
        super().__init__(message)
        self.shapes = [tuple(s) for s in shapes]


class ConfigurationError(PmGanError, ValueError):
    """Invalid configuration value or combination."""

    code = "config"


class UnknownConfigKeyError(ConfigurationError):
    """A config file names a key no configuration model accepts."""

    code = "config.unknown_key"

    def __init__(self, key: str, line: Optional[int], source: str):
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"unknown config key '{key}' at {where}")
        self.key = key
        self.line = line


class ContractError(PmGanError, ValueError):
    """Caller violated an operation's precondition."""

    code = "contract"


class NonFiniteLossError(PmGanError, ArithmeticError):
    """A loss evaluated to NaN or infinity during training."""

    code = "train.non_finite"

    def __init__(self, epoch: int, batch: int, component: str, value: float):
        super().__init__(
            f"non-finite {component}={value!r} at epoch {epoch}, batch {batch}"
        )
        self.epoch = epoch
        self.batch = batch
        self.component = component


class AlternationError(PmGanError):
    """A frozen parameter group changed during the other player's update."""

    code = "train.alternation"


class FormatError(PmGanError):
    """File does not start with the expected magic bytes."""

    code = "io.format"

    def __init__(self, path: str, expected: bytes, found: bytes):
        super().__init__(
            f"{path}: expected magic {expected.decode('ascii')!r}, found {found!r}"
        )
        self.expected = expected


class VersionMismatchError(PmGanError):
    """File format version is not supported by this build."""

    code = "io.version"

    def __init__(self, path: str, expected: int, found: int):
        super().__init__(f"{path}: unsupported format version {found} (expected {expected})")
        self.expected = expected
        self.found = found


class TruncatedFileError(PmGanError):
    """File ended before a complete record could be read."""

    code = "io.truncated"


class ArtifactNotFoundError(PmGanError):
    """A required input file does not exist."""

    code = "io.missing"


class VisibleDataAccessError(PmGanError):
    """Real visible data was touched by an evaluation that must not see it."""

    code = "eval.visible_access"
