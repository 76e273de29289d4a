"""Exception types shared across the package.

The CLI maps ``ConfigError`` to exit code 2 (bad configuration) and every
other :class:`ReplayLabError` (or unexpected exception) to exit code 1.
"""


class ReplayLabError(Exception):
    """Base class for errors raised by replaylab."""


class ConfigError(ReplayLabError):
    """Invalid configuration, scenario spec, or strategy combination."""


class LoadError(ReplayLabError):
    """A corpus, manifest, or snapshot could not be loaded."""


class NumericsError(ReplayLabError):
    """Non-finite value encountered during training or inference."""


class MemoryEmptyError(ReplayLabError):
    """Sampling was requested from an empty replay memory."""


class RoutingError(ReplayLabError):
    """No per-task model exists for the requested task label."""
