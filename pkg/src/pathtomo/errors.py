"""Exception types raised by pathtomo."""


class PathTomoError(ValueError):
    """Base class for all pathtomo errors."""


class UnphysicalStateError(PathTomoError):
    """A density matrix has a significantly negative eigenvalue."""


class NumericalError(PathTomoError):
    """An eigendecomposition or other numerical kernel failed."""


class DegenerateStateError(PathTomoError):
    """The input cannot be normalized or projected to a valid state."""


class InvalidStateError(PathTomoError):
    """A matrix violates Hermiticity or the unit-trace condition."""


class PathMergeError(PathTomoError):
    """A beam displacer would move a path onto an occupied position."""


class EmptyStateError(PathTomoError):
    """Every path was blocked."""


class GeometryError(PathTomoError):
    """The path geometry is unusable for the requested operation."""


class ConstructionUndefinedError(PathTomoError):
    """A ruler construction was requested for an unsupported size."""


class FieldOfViewError(PathTomoError):
    """Part of the light falls outside the sensor."""


class AliasingError(PathTomoError):
    """Fringes are finer than two pixels."""


class CalibrationError(PathTomoError):
    """A reference state cannot fix the phase of some coherence."""


class IncompletePlanError(PathTomoError):
    """Some pair of paths is not covered by any frame."""


class ConfigMismatchError(PathTomoError):
    """Frames were recorded with inconsistent optical configurations."""
