"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration or unsatisfiable request (raised before any compute)."""


class IDXParseError(ValueError):
    """Malformed IDX payload. ``offset`` is the byte position where parsing failed."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class NonFiniteError(FloatingPointError):
    """A gradient or loss went non-finite; training must abort."""


class CacheMismatchError(RuntimeError):
    """A forward cache was used with a model it was not produced by."""


class UndefinedMetricError(ValueError):
    """Metric is undefined for the given labels (e.g. a single class)."""
