"""Size-aware virtual try-on evaluation.

Multi-size garment masks from a tight mask and body keypoints, edge-band
mask refinement, garment measurement on generated try-on images, wrinkle
compensation, and size-increment error evaluation against standard sizing
steps.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    BackendError,
    ConfigurationError,
    InvalidInputError,
    MeasurementImpossibleError,
    ProtocolError,
    ReportParseError,
    VtonSizeError,
)
