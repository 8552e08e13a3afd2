from django.core.exceptions import ValidationError


class RasterDecodeError(ValidationError):
    """Raised when an image file cannot be decoded into a raster."""


class TileGeometryError(ValidationError):
    """Raised for impossible tile layouts or tiles outside the map."""


class BackendError(ValidationError):
    """Raised when a classifier or segmenter fails on a tile."""


class ExternalBackendError(BackendError):
    """Raised when an external backend process or its response is unusable."""


class DomainError(ValidationError):
    """Raised when cost-model arguments fall outside their domain."""


class SynthesisError(ValidationError):
    """Raised for synthetic map parameters that cannot be honoured."""
