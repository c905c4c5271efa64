"""Exception hierarchy shared by every stage of the pipeline."""


class HopfBalanceError(Exception):
    """Base class for all package errors."""


class DimensionError(HopfBalanceError, ValueError):
    pass


class ConvergenceError(HopfBalanceError):
    """An iterative method failed; ``residual`` holds the best value seen."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularityError(HopfBalanceError):
    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class CapabilityError(HopfBalanceError):
    """Requested order, quantity or feature is not supported."""


class PrecisionError(HopfBalanceError):
    pass


class ModelParseError(HopfBalanceError, ValueError):
    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class ValidationError(HopfBalanceError, ValueError):
    pass


class MultiplicityError(HopfBalanceError):
    """The tracked characteristic function is not simple."""


class TrackingError(HopfBalanceError):
    pass


class DegenerateFrequencyError(HopfBalanceError):
    pass


class ResonanceError(HopfBalanceError):
    """A harmonic j != 1 hits the imaginary axis: L_j is singular."""

    def __init__(self, message, harmonic):
        super().__init__(message)
        self.harmonic = harmonic


class ProjectionError(HopfBalanceError):
    pass


class DegeneracyError(HopfBalanceError):
    """A nondegeneracy inequality required by an expansion fails."""


class IllConditionedError(HopfBalanceError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class IndeterminateOrderError(HopfBalanceError):
    pass


class CodimensionOverflowError(HopfBalanceError):
    pass
