"""Exception hierarchy.

Every exception carries a short ``kind`` tag used by the command-line front
end when it prints ``ERROR <code> <kind>: <message>``.
"""


class PencilError(Exception):
    kind = "PencilError"


class ParseError(PencilError):
    kind = "ParseError"


class ValidationError(PencilError, ValueError):
    kind = "ValidationError"


class DomainError(PencilError, ValueError):
    kind = "DomainError"


class StepFailure(PencilError, ArithmeticError):
    kind = "StepFailure"


class NonFinite(PencilError, ArithmeticError):
    kind = "NonFinite"


class ScanExhausted(PencilError):
    kind = "ScanExhausted"


class NonConvergence(PencilError):
    """Newton refinement did not reach tolerance.

    ``best`` holds ``(lambda, residual, iterations)`` of the best iterate.
    """

    kind = "NonConvergence"

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class IncompleteSpectrum(PencilError):
    """Some windows failed; ``partial`` holds the Spectrum assembled anyway."""

    kind = "IncompleteSpectrum"

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class BoundaryRoot(PencilError):
    kind = "BoundaryRoot"

    def __init__(self, message, raw=None):
        super().__init__(message)
        self.raw = raw


class SpecMismatch(PencilError, ValueError):
    kind = "SpecMismatch"


class UnboundedKernel(PencilError, ArithmeticError):
    kind = "UnboundedKernel"


class AllDiverged(PencilError):
    kind = "AllDiverged"


class IllConditioned(UserWarning):
    """Warning category: Jacobian condition number above the threshold."""


class MaxIterations(UserWarning):
    """Warning category: optimizer stopped on the iteration cap."""
