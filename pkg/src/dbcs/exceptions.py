"""Exception hierarchy shared by every module of the package."""


class DbcsError(Exception):
    """Base class for all errors raised by this package."""


class MatrixFormatError(DbcsError, ValueError):
    """A DBCS1 matrix file is malformed."""

    def __init__(self, message, path=None):
        self.path = path
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)


class BadMagicError(MatrixFormatError):
    """File does not start with the ``DBCS1`` magic bytes."""


class TruncatedPayloadError(MatrixFormatError):
    """File is shorter (or longer) than its header promises."""


class NonFiniteError(DbcsError, ValueError):
    """A matrix contains NaN or infinite entries."""


class DimensionMismatchError(DbcsError, ValueError):
    """Operands have incompatible shapes."""


class NonFiniteObjectiveError(DbcsError, FloatingPointError):
    """An iterative solver produced a NaN or infinite objective value."""


class ConfigError(DbcsError, ValueError):
    """Experiment configuration is invalid."""


class StageError(DbcsError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
