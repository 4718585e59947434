"""Exception types shared across the package."""


class GazeHeadError(Exception):
    """Base class for all package-specific errors."""


class ParseError(GazeHeadError):
    """A serialized record could not be parsed.

    Carries the 1-based line number of the offending record when known.
    """

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ValidationError(GazeHeadError):
    """Input data violates a semantic requirement (ordering, duplicates, missing fields)."""


class ConfigurationError(GazeHeadError):
    """A configuration value or combination of values is unusable."""


class CheckpointFormatError(GazeHeadError):
    """A checkpoint file is missing, not a checkpoint, or has an incompatible format version."""


class TrainingError(GazeHeadError):
    """Training aborted (for example a non-finite loss)."""
