"""Exception types shared across the toolkit."""


class AdiaplanError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(AdiaplanError, ValueError):
    """An argument violates a documented precondition."""


class ValidationError(AdiaplanError, ValueError):
    """Data violates a structural invariant (range, shape, NaN, ...)."""


class WaveformParseError(AdiaplanError, ValueError):
    """A waveform file could not be parsed; the message carries diagnostics."""


class UnsupportedFormatError(AdiaplanError, ValueError):
    """A file is recognized but uses a feature outside the supported subset."""


class CorruptFileError(AdiaplanError, ValueError):
    """A file's header and payload disagree."""


class DegenerateInputError(AdiaplanError, ValueError):
    """Input admits no meaningful answer (e.g. constant volume for Otsu)."""


class EmptyInputError(AdiaplanError, ValueError):
    """An operation received an empty collection."""


class GridMismatchError(InvalidArgumentError):
    """Two volumes were expected on the same grid but are not."""


class NumericalError(AdiaplanError, ArithmeticError):
    """Non-finite values appeared during numerical integration."""


class ThresholdNotFoundError(AdiaplanError, RuntimeError):
    """The target inversion efficiency was not reached inside the search range."""

    def __init__(self, message: str, best_efficiency: float):
        super().__init__(message)
        self.best_efficiency = best_efficiency
