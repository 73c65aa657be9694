"""Exception types shared across the package."""


class DataError(Exception):
    """Raised when an input file or data payload is malformed or unusable."""


class PixmapParseError(DataError):
    """Malformed portable pixmap; carries the byte offset of the failure."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class DegenerateComponentError(ValueError):
    """A factor column collapsed to zero; the component cannot be normalized."""

    def __init__(self, component):
        super().__init__(f"component {component} has a zero factor column")
        self.component = component


class NumericalRankError(ValueError):
    """A least-squares system is numerically singular; increase the damping."""
