"""Exception types shared across the package."""


class Geom4dError(Exception):
    """Base class for all domain errors raised by geom4d."""


class ConventionMismatch(Geom4dError):
    """Two poses/trajectories with different conventions were combined."""


class DegenerateGeometry(Geom4dError):
    """Input configuration does not determine a unique solution."""


class FormatError(Geom4dError):
    """A file did not conform to its on-disk format."""
