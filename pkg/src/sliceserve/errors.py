"""Exception types shared across the package."""


class SliceServeError(Exception):
    """Base class for errors raised by this package."""


class GraphError(SliceServeError):
    """Structural problem in a task graph (cycle, bad entry, dangling edge)."""


class ConfigError(SliceServeError):
    """Invalid or incomplete application/configuration input."""


class ProfileError(SliceServeError):
    """Invalid profile table or profile file contents."""


class GeometryError(SliceServeError):
    """Invalid GPU partition geometry table."""
