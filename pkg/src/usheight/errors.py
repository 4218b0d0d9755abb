"""Exception types shared across the package.

Argument-level mistakes (wrong length, bad label, non-divisible counts)
raise plain ValueError; the classes below mark failures that callers may
want to handle distinctly, e.g. to map to CLI exit codes.
"""


class ConfigError(ValueError):
    """Invalid signal or run configuration (e.g. Nyquist violation)."""


class DesignError(ValueError):
    """Filter design infeasible for the requested parameters."""


class ScenarioError(ValueError):
    """Physically impossible measurement scenario (echo outside the window)."""


class ShapeError(ValueError):
    """Tensor shapes incompatible with the requested operation."""


class StateError(RuntimeError):
    """Operation invoked out of order (e.g. backward without a forward pass)."""


class FormatError(ValueError):
    """Corrupt or unrecognized file contents (PNG, checkpoint, manifest)."""


class DataError(ValueError):
    """Dataset cannot satisfy the request (e.g. class underpopulated)."""


class UsageError(ValueError):
    """Mismatched artifacts (e.g. absolute-variant model fed complex data)."""
