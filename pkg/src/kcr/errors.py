"""Exception types shared across the package."""


class KcrError(Exception):
    """Base class for every error this package raises on purpose."""


class ShapeError(KcrError, ValueError):
    """An operation received operands with incompatible shapes or extents."""


class NumericsError(KcrError, ArithmeticError):
    """A computation produced non-finite values (NaN/Inf)."""


class DataError(KcrError):
    """Input data (files, directory trees) is missing or malformed."""


class CheckpointError(DataError):
    """A checkpoint file is corrupt, truncated, or not a checkpoint at all."""


class UsageError(KcrError):
    """Command-line arguments are invalid."""
