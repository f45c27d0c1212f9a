"""Exception hierarchy for the noisestab library."""


class NoiseStabilityError(Exception):
    """Base exception for noisestab errors."""
    pass


class InvalidParameterError(NoiseStabilityError, ValueError):
    """Exception for out-of-range or non-finite parameters."""
    pass


class DimensionMismatchError(InvalidParameterError):
    """Exception for vectors or multi-indices of the wrong length."""
    pass


class UnsupportedGeometryError(NoiseStabilityError):
    """Exception for geometry a routine cannot handle exactly."""
    pass


class MethodUnavailableError(NoiseStabilityError):
    """Exception for a stability method that does not apply to a partition kind."""
    pass


class QuadratureError(NoiseStabilityError):
    """Exception for non-finite quadrature sums."""
    pass


class TruncationError(NoiseStabilityError):
    """Exception for a Hermite series tail bound above the requested tolerance."""
    pass


class EnumerationCapError(NoiseStabilityError):
    """Exception for exhaustive enumerations beyond the configured cap."""
    pass


class WitnessNotFoundError(NoiseStabilityError):
    """Exception raised when a witness scan finds no certified point."""

    def __init__(self, message: str, scanned_region: dict = None):
        super().__init__(message)
        self.scanned_region = scanned_region or {}


class ManifestError(NoiseStabilityError):
    """Exception for malformed experiment manifests."""
    pass
