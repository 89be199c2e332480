"""Exception types shared across the package.

The CLI maps each family onto one exit code; see cli.py.
"""


class DmlpError(Exception):
    """Base class for every error this package raises on purpose."""


class ConfigError(DmlpError):
    """A configuration value is outside its documented range."""


class ShapeError(DmlpError):
    """An array, label index, or trace has the wrong shape or range."""


class NumericError(DmlpError):
    """Non-finite values where finite arithmetic is required."""


class DataError(DmlpError):
    """Dataset-level problem: empty input, missing landmarks, single class."""


class ParseError(DataError):
    """A record could not be parsed; message carries file:line when known."""


class SplitError(DataError):
    """Subject routing problem: unknown subject or overlapping split lists."""


class ModelFormatError(DmlpError):
    """Model file violates the container format (magic, version, trailer)."""


class ModelCorruptError(ModelFormatError):
    """Model file is truncated or failed its checksum."""


class ModelStructureError(ModelFormatError):
    """Model file decoded but its contents are internally inconsistent."""


class StorageError(DmlpError):
    """I/O failure while reading or writing a model file."""


class BudgetError(DmlpError):
    """Encoded model exceeds the on-disk size budget."""


class StreamError(DmlpError):
    """Streaming daemon could not start or lost its listener."""


class BenchmarkError(DmlpError):
    """Latency benchmark invoked with too few samples to be meaningful."""
