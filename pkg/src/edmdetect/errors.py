"""Exception types shared across the package."""


class GeometryError(ValueError):
    """Scenario geometry violates a structural requirement."""


class ConstellationSamplingError(GeometryError):
    """Rejection sampling could not place the requested satellites."""


class SpectrumError(ArithmeticError):
    """Eigendecomposition failed or produced a degenerate leading eigenvalue."""


class DegenerateEigenvalueError(ArithmeticError):
    """A tracked eigenvalue is too close to a neighbor for first-order tracking."""


class ConfigError(ValueError):
    """Run configuration is invalid or refers to unusable paths."""
