"""Exception types shared across the package."""


class GeotagFacadeError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(GeotagFacadeError):
    """Input file is not syntactically valid.

    Carries the byte offset of the first problem when the underlying
    parser provides one.
    """

    def __init__(self, path, message, offset=None):
        self.path = str(path)
        self.offset = offset
        detail = f"{path}: {message}"
        if offset is not None:
            detail += f" (byte offset {offset})"
        super().__init__(detail)


class LoadError(GeotagFacadeError):
    """Input file is syntactically valid but unusable (e.g. duplicate keys)."""


class ConfigError(GeotagFacadeError):
    """Invalid configuration value or infeasible generation request."""


class OutOfRangeError(GeotagFacadeError):
    """Point lies beyond the flat-plane approximation range of the camera."""


class DegenerateSceneError(GeotagFacadeError):
    """The camera sits strictly inside a building footprint."""
