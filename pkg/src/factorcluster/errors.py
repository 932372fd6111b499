"""Exception types shared across the package."""


class FactorClusterError(Exception):
    """Base class for all errors raised by this package."""


class PanelFormatError(FactorClusterError):
    """A CSV file or in-memory panel violates the data contract."""


class EstimationError(FactorClusterError):
    """A numerical procedure cannot produce a valid estimate."""
