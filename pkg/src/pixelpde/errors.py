"""Exception types shared across the package.

Plain ``ValueError`` is raised for invalid arguments; the classes here cover
failure modes that callers may want to catch separately (degenerate inputs,
blow-up during rollouts, nonlinear-solver stalls, corrupt files).
"""


class PixelPDEError(Exception):
    """Base class for pixelpde-specific runtime failures."""


class DegenerateInputError(PixelPDEError):
    """An input is structurally valid but numerically degenerate (e.g. zero norm)."""


class DivergenceError(PixelPDEError):
    """Non-finite values appeared during a rollout, gradient, or proxy solve."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SolverFailureError(PixelPDEError):
    """An iterative solver failed to converge; carries the last residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class FormatError(PixelPDEError):
    """A serialized file is malformed; ``offset`` is the failing byte position."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class ConfigError(PixelPDEError):
    """A run configuration cannot be satisfied (e.g. rejection sampling stalls)."""
