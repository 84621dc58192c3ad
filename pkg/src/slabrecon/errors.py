"""Exception hierarchy shared across the toolkit."""


class SlabreconError(Exception):
    """Base class for all toolkit errors."""


class InvalidInput(SlabreconError):
    """Precondition violation on user-supplied data or parameters."""


class LayoutMismatch(SlabreconError):
    """Volume dimensions do not agree with the declared slab layout."""


class EmptyOverlap(SlabreconError):
    """No masked voxel lands inside the fixed image field of view."""


class RegistrationFailed(SlabreconError):
    """Registration could not produce a usable transform."""


class EmptyROI(SlabreconError):
    """Region of interest contains no voxel centers."""


class DegenerateInput(SlabreconError):
    """Statistic is undefined for this input (zero denominator etc.)."""


class UnsupportedFormat(SlabreconError):
    """File is structurally valid but uses features outside this reader."""


class ParseError(SlabreconError):
    """Malformed file. Carries the byte offset of the offending field."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(SlabreconError):
    """Bad configuration file or unknown configuration key."""
