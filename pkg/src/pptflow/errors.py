"""Exception types shared across the package."""


class ShapeMismatchError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ConfigurationError(ValueError):
    """A structural configuration value is invalid (kernel size, bandwidth, ...)."""


class InputTooShortError(ValueError):
    """A sequence is shorter than the operation's minimum length."""


class DegenerateSliceError(ValueError):
    """A softmax slice is entirely masked (-inf everywhere)."""


class DomainError(ValueError):
    """A value lies outside its mathematical domain (negative count, ...)."""


class DataSchemaError(ValueError):
    """An input file does not match the documented column schema."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class EmptyDirectionError(ValueError):
    """No vehicle tracks exist for the requested travel direction."""


class SeriesTooShortError(ValueError):
    """A series is too short for the requested window geometry."""

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class NumericFailureError(FloatingPointError):
    """Non-finite values were produced; carries the pipeline stage name."""

    def __init__(self, stage, message=None):
        super().__init__(message or f"non-finite values produced at stage '{stage}'")
        self.stage = stage


class NoActivationError(ValueError):
    """The aggregated fuzzy output is identically zero; centroid undefined."""


class CheckpointError(ValueError):
    """A checkpoint file is corrupt or incompatible with the data."""


class DataInconsistencyWarning(UserWarning):
    """Input data violates a physical constraint (e.g. occupancy > 1)."""


class ReducedTopKWarning(UserWarning):
    """Fewer usable spectral bins exist than the requested top-k."""


class UniformWeightFallbackWarning(UserWarning):
    """Fusion-weight normalizer underflowed; uniform weights substituted."""
