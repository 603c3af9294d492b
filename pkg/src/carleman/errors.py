"""Exception hierarchy for carleman.

Every error carries the structured context that produced it as attributes, so
callers (and the CLI exit-code mapping) can react without parsing messages.
"""

from typing import Any, Optional


class CarlemanError(Exception):
    """Base class for all carleman errors."""

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.context = context

    def __getattr__(self, name: str) -> Any:
        context = self.__dict__.get("context", {})
        if name in context:
            return context[name]
        raise AttributeError(name)


class InvalidInput(CarlemanError, ValueError):
    """An input violates a documented precondition."""


class NumericalLimit(CarlemanError):
    """A finite grid, truncation or derivative cap was not large enough."""


class VerificationFailed(CarlemanError):
    """A bound or certificate that must hold was measured to fail."""


class NonPositive(InvalidInput):
    pass


class LengthMismatch(InvalidInput):
    pass


class NotIncreasing(InvalidInput):
    pass


class GridTooCoarse(InvalidInput):
    pass


class NotCoprime(InvalidInput):
    pass


class FactorNonpositive(InvalidInput):
    pass


class NotLhd(InvalidInput):
    pass


class InconsistentPowers(InvalidInput):
    pass


class UnknownBuiltin(InvalidInput, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class TruncationSaturated(NumericalLimit):
    pass


class MaximizerAtBoundary(NumericalLimit):
    pass


class GridExhausted(NumericalLimit):
    """Raised with the partial construction attached as ``partial``."""

    def __init__(self, message: str, partial: Optional[Any] = None, **context: Any):
        super().__init__(message, **context)
        self.partial = partial


class DerivativeCapExceeded(NumericalLimit):
    pass


class DerivativeCapBinds(NumericalLimit):
    pass


class SupportTouchesEdge(NumericalLimit):
    pass


class TailNotSummable(NumericalLimit):
    pass


class ViolationFound(VerificationFailed):
    pass


class FctmodViolation(VerificationFailed):
    pass


class AuditFailed(VerificationFailed):
    pass


class HypothesisFailed(VerificationFailed):
    pass


class NotEventuallyIncreasing(VerificationFailed):
    pass


class CertificateMissing(VerificationFailed):
    pass
