"""Exception types shared across the simulator."""


class RramtcError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(RramtcError):
    """Invalid dimensions, fractions, ranges, or other static configuration."""


class ModelRangeError(RramtcError):
    """Temperature outside the validity window of a conductance model."""


class SolverError(RramtcError):
    """Linear solve failed or did not meet the residual tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class DegenerateMapError(RramtcError):
    """Current-density map requested for a solve carrying no net current."""


class OrderParameterError(RramtcError):
    """Order parameter is undefined for a lattice with no vacancies."""


class FitError(RramtcError):
    """Temperature sweep unsuitable for a linear resistance fit."""


class CalibrationError(RramtcError):
    """Calibration search did not reach the requested tolerance."""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class SaturationError(RramtcError):
    """No unoccupied sites left for vacancy generation."""


class TrainingError(RramtcError):
    """Network training diverged."""


class AssignmentError(RramtcError):
    """Cell conductance not covered by the supplied coefficient statistics."""


class DriftRangeError(RramtcError):
    """Conductance drift denominator is non-positive at the requested temperature."""


class IdxFormatError(RramtcError):
    """Malformed IDX image or label file."""
