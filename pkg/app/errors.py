"""Exception hierarchy shared by the pipeline, the CLI and the HTTP surface."""


class PositioningError(Exception):
    """Base class for every failure raised by the positioning pipeline."""

    # CLI exit code and HTTP status used when the error escapes to the surface
    exit_code = 1
    http_status = 500


class InvalidInputError(PositioningError):
    """A value is outside its documented domain (latitude range, empty list...)."""

    exit_code = 2
    http_status = 422


class ConfigurationError(PositioningError):
    """A configuration or scenario file is missing, malformed or inconsistent."""

    exit_code = 2
    http_status = 422


class MapFormatError(InvalidInputError):
    """A map document could not be parsed into simple building polygons."""


class ContractViolationError(PositioningError):
    """An operation was called outside its precondition."""


class NotInitializedError(PositioningError):
    """An estimator was used before its first absolute fix."""


class GeometryError(PositioningError):
    """Anchor geometry does not make the position observable."""


class SolverError(PositioningError):
    """An iterative solver did not converge or hit a singular system."""


class OutlierError(PositioningError):
    """A solution was found but its residuals exceed the configured gate."""


class TimestampRegressionError(PositioningError):
    """An observation log goes backwards in time."""

    def __init__(self, path: str, line: int, t: float, previous: float):
        super().__init__(
            f"{path}:{line}: timestamp {t:.6f} precedes previous {previous:.6f}"
        )
        self.path = path
        self.line = line


class NoOverlapError(PositioningError):
    """Estimates and ground truth share no time range."""
