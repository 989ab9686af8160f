"""Exception and warning types shared across the library."""


class CocycleKitError(Exception):
    """Base class for all library errors."""


class InvalidInputError(CocycleKitError, ValueError):
    """Non-finite entries, dimension mismatches, malformed arguments."""


class NearSingularError(CocycleKitError):
    """A positive-definite routine met an eigenvalue below the guard threshold."""

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class DegenerateGeneratorError(CocycleKitError):
    """A cocycle generator evaluated to a (near-)singular matrix."""


class WindowExhaustedError(CocycleKitError):
    """A shift point was iterated beyond its representable window."""


class SeriesDivergenceError(CocycleKitError):
    """The Lyapunov-norm series failed to converge; try a larger epsilon."""


class ResidualExceededError(CocycleKitError):
    """An invariance residual exceeded its tolerance."""

    def __init__(self, message, worst_point=None, residual=None):
        super().__init__(message)
        self.worst_point = worst_point
        self.residual = residual


class DefectExceededError(CocycleKitError):
    """An orthogonality or invariance defect exceeded its tolerance."""

    def __init__(self, message, worst_point=None, defect=None):
        super().__init__(message)
        self.worst_point = worst_point
        self.defect = defect


class IncreaseHorizonError(CocycleKitError):
    """Bundle estimation found too small a singular gap; advise a larger horizon."""


class AdaptedMetricError(CocycleKitError):
    """No tested epsilon produced a one-step adapted metric."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(CocycleKitError):
    """Experiment configuration failed parsing or schema validation."""


class HypothesisWarning(UserWarning):
    """A theorem hypothesis looks violated; computation proceeds anyway."""


class GapToleranceWarning(HypothesisWarning):
    """Estimated top and bottom exponents differ by more than the gap tolerance."""
