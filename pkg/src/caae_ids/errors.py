"""Exception hierarchy shared by every module of the package."""


class CaaeIdsError(Exception):
    """Base class for all package errors."""


class ParseError(CaaeIdsError, ValueError):
    """Text could not be parsed (bad hex digit, empty field)."""


class RangeError(CaaeIdsError, ValueError):
    """A value parsed fine but lies outside its allowed range."""


class FormatError(CaaeIdsError, ValueError):
    """A log record is structurally malformed.

    ``line`` carries the 1-based line number when the error came from a file.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IoError(CaaeIdsError, OSError):
    """Reading or writing a file failed."""


class ConfigError(CaaeIdsError, ValueError):
    """Invalid configuration for a generator, split or protocol."""


class InsufficientData(CaaeIdsError, ValueError):
    """Not enough messages to build even one frame."""


class ShapeError(CaaeIdsError, ValueError):
    """Array shapes do not conform to what an operation expects."""


class NumericsError(CaaeIdsError, ArithmeticError):
    """A non-finite value showed up in a loss or gradient."""


class TopologyError(CaaeIdsError, ValueError):
    """A network does not have the structure an operation supports."""


class LabelError(CaaeIdsError, ValueError):
    """Labels are not one-hot encoded."""


class CheckpointError(CaaeIdsError):
    """A checkpoint file is corrupt, truncated or from another format version."""


class EmptyEvalError(CaaeIdsError, ValueError):
    """Evaluation was requested over zero samples."""
