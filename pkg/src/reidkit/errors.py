"""Exception types shared across the toolkit."""


class ReidError(Exception):
    """Base class for all toolkit errors."""


class FormatError(ReidError):
    """A file or byte stream does not conform to its expected format."""


class MagicError(FormatError):
    """Container begins with unknown magic bytes."""


class VersionError(FormatError):
    """Container declares an unsupported format version."""


class TruncationError(FormatError):
    """Payload shorter than the header promises."""


class DataError(ReidError):
    """Input data violates an operation's preconditions."""
