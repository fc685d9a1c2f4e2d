"""Exception types shared across the package."""


class SolverError(RuntimeError):
    """An iterative solve or grid ladder failed to reach its target."""


class ConfigError(ValueError):
    """A run configuration key, value, or combination is invalid."""


class AcceptanceError(AssertionError):
    """A self-check requested with --assert did not hold."""
