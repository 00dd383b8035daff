"""Exception hierarchy shared by every module.

Each error carries the process exit code the CLI returns for it.
"""


class LcaError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(LcaError, ValueError):
    """Invalid or unknown configuration value."""

    exit_code = 2


class CorpusFormatError(LcaError, ValueError):
    """Dataset or vectors file does not follow its format."""

    exit_code = 3


class AlignmentError(CorpusFormatError):
    """Character offsets of an aspect term cover no token."""


class UnrepresentableExampleError(CorpusFormatError):
    """Target span does not fit into the padding length."""


class CheckpointFormatError(LcaError, ValueError):
    """Checkpoint file is empty, truncated or not a checkpoint."""

    exit_code = 4


class CheckpointVersionError(CheckpointFormatError):
    """Checkpoint was written by an incompatible format version."""


class DivergenceError(LcaError, ArithmeticError):
    """Training produced a non-finite loss."""

    exit_code = 5


class ShapeError(LcaError, ValueError):
    """Operand shapes do not agree."""

    exit_code = 6


class ContractError(LcaError, RuntimeError):
    """An operation was called outside its preconditions."""

    exit_code = 9


class TargetNotFoundError(LcaError, LookupError):
    """Target phrase does not occur in the sentence."""

    exit_code = 7
