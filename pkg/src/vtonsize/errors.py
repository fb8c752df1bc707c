"""Exception types raised across the package."""


class VtonSizeError(Exception):
    """Base class for all package errors."""


class InvalidInputError(VtonSizeError, ValueError):
    """An argument is malformed or out of its documented range."""


class MeasurementImpossibleError(VtonSizeError):
    """A required input (keypoint, body region) is missing."""


class ConfigurationError(VtonSizeError):
    """Run configuration or label schema is incomplete or inconsistent."""


class BackendError(VtonSizeError):
    """An external inference service failed or returned garbage."""


class ProtocolError(BackendError):
    """An external service answered with a payload that breaks the contract."""


class ReportParseError(VtonSizeError):
    """A run report could not be decoded.

    ``offset`` is the byte offset at which decoding failed.
    """

    def __init__(self, message, offset=0):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
