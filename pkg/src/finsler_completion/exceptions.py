"""Exception hierarchy shared by all modules."""


class FinslerError(Exception):
    """Base class for errors raised by this package."""


class DomainError(FinslerError, ValueError):
    """A point lies outside the grid or on a masked node."""


class DataError(FinslerError, ValueError):
    """Metric data violates a structural requirement (e.g. non-SPD matrix)."""


class AdmissibilityError(FinslerError, ValueError):
    """F + df fails to be positive on some (x, v)."""

    def __init__(self, message, worst_point=None, worst_direction=None, margin=None):
        super().__init__(message)
        self.worst_point = worst_point
        self.worst_direction = worst_direction
        self.margin = margin


class GraphConstructionError(FinslerError, ValueError):
    """An edge weight came out nonpositive."""


class ResolutionError(FinslerError, ValueError):
    """The grid is too coarse for the requested tolerance."""


class ConfigError(FinslerError, ValueError):
    """A scenario document failed validation."""
