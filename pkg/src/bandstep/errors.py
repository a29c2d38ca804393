"""Exception hierarchy shared across the package.

The split mirrors the process exit codes: usage problems (bad arguments,
shape mismatches) map to 1, data problems (files, corpora, checkpoints)
to 2, and numeric failures during optimization to 3.
"""


class BandstepError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(BandstepError, ValueError):
    """An argument violates an operation's preconditions."""


class DataError(BandstepError, RuntimeError):
    """Input data (files, directories, corpora) is missing or malformed."""


class CheckpointError(DataError):
    """A checkpoint file is corrupt, truncated, or incompatible."""


class NumericError(BandstepError, ArithmeticError):
    """A non-finite value surfaced where the math requires finite ones."""
