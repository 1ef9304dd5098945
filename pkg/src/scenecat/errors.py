"""Exception types shared across the package."""


class ScenecatError(Exception):
    """Base class for every error raised by this package."""


class InputError(ScenecatError):
    """Bad user-supplied data: unreadable image, undersized input, id mismatch."""


class ConfigError(ScenecatError):
    """Invalid configuration or parameter combination."""


class FormatError(ScenecatError):
    """Malformed on-disk artifact (dictionary file, representation matrix, ...)."""
