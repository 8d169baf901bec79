"""
Exception types shared across the segmentation pipeline.

Library code raises these; only the command line entry point turns them
into exit codes (see EXIT_CODES).
"""


class SegmentationError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(SegmentationError, ValueError):
    """Invalid or missing configuration (hyperparameters, config keys, dims)."""


class DimensionError(SegmentationError, ValueError):
    """Array shapes that do not fit together."""


class CapacityError(SegmentationError, ValueError):
    """An explicit (exponentially large) tensor was requested above the size guard."""


class DataError(SegmentationError, ValueError):
    """Unusable input data (empty directories, unpaired files, bad values)."""


class ParseError(DataError):
    """Malformed file contents.

    Args:
        message (str): Human-readable description
        offset (int, optional): Byte offset at which parsing failed
        path (str, optional): File being parsed
    """

    def __init__(self, message, offset=None, path=None):
        self.offset = offset
        self.path = path
        details = []
        if path is not None:
            details.append(str(path))
        if offset is not None:
            details.append(f"byte offset {offset}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)


class UndefinedMetricError(SegmentationError, ValueError):
    """A metric has no defined value for the given inputs."""


class NumericError(SegmentationError, ArithmeticError):
    """Non-finite values met during training.

    Args:
        message (str): Description of what went non-finite
        epoch (int, optional): Epoch in which it happened
        batch (int, optional): Minibatch index within the epoch
    """

    def __init__(self, message, epoch=None, batch=None):
        self.epoch = epoch
        self.batch = batch
        if epoch is not None or batch is not None:
            message = f"{message} (epoch {epoch}, batch {batch})"
        super().__init__(message)


# Process exit codes used by src.main
EXIT_CODES = {
    ConfigurationError: 2,
    DimensionError: 2,
    CapacityError: 2,
    DataError: 3,
    UndefinedMetricError: 3,
    NumericError: 4,
}


def exit_code_for(error):
    """
    Map an exception to a process exit code.

    Args:
        error (Exception): Raised exception

    Returns:
        int: Exit code (1 for anything not in EXIT_CODES)
    """
    for error_type, code in EXIT_CODES.items():
        if isinstance(error, error_type):
            return code
    if isinstance(error, OSError):
        return 3
    return 1
