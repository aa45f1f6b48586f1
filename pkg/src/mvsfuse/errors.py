"""Exception hierarchy shared by all modules."""


class MvsFuseError(Exception):
    """Base class for every error raised by this package."""


class NonPositiveDepth(MvsFuseError, ValueError):
    pass


class GimbalLock(MvsFuseError, ValueError):
    pass


class DimensionMismatch(MvsFuseError, ValueError):
    pass


class EmptyScene(MvsFuseError):
    pass


class InvalidSpec(MvsFuseError, ValueError):
    pass


class MalformedHeader(MvsFuseError, ValueError):
    pass


class UnsupportedFormat(MvsFuseError, ValueError):
    pass


class SchemaViolation(MvsFuseError, ValueError):
    """Manifest or config content does not match the schema.

    ``field`` holds the dotted path of the offending entry.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class InvalidRange(MvsFuseError, ValueError):
    pass


class NoSources(MvsFuseError, ValueError):
    pass


class NonPositiveTemperature(MvsFuseError, ValueError):
    pass


class InsufficientAnchors(MvsFuseError):
    pass


class InsufficientValidDepth(MvsFuseError):
    pass


class LengthMismatch(MvsFuseError, ValueError):
    pass


class NoValidPixels(MvsFuseError):
    pass


class EmptyMask(MvsFuseError):
    pass


class EmptyList(MvsFuseError, ValueError):
    pass


class ConfigError(MvsFuseError, ValueError):
    """Malformed run configuration or override."""
