"""Exceptions raised by the curved Kepler package"""


class CurvedKeplerError(Exception):
    """Base class for all package errors"""


class ValidationError(CurvedKeplerError, ValueError):
    """A user supplied value violates a precondition"""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class BlockTooLargeError(ValidationError):
    """The block size exceeds the isolating range (convexity condition fails)"""


class PoleEvaluationError(CurvedKeplerError, ValueError):
    """Evaluation requested at a pole where f vanishes"""


class EquatorDegeneracyError(CurvedKeplerError, ValueError):
    """The blow-up transform is singular where Theta vanishes"""


class ChartDomainError(CurvedKeplerError, ValueError):
    """A state lies outside the chart an operation is defined on"""


class DegenerateOrbitError(CurvedKeplerError, ValueError):
    """Radial orbits have no conic form"""


class EmbeddingUnavailableError(CurvedKeplerError, ValueError):
    """The surface cannot be embedded in three dimensions (beta > 1)"""


class AsymptoticSetError(CurvedKeplerError, ValueError):
    """The map across the block is undefined on the asymptotic set"""


class NumericalFailureError(CurvedKeplerError, ArithmeticError):
    """The integrator or a finite difference scheme broke down"""


class TransitTimeoutError(NumericalFailureError):
    """A block transit did not exit within the configured time cap"""


class ClassificationError(NumericalFailureError):
    """The orbifold and north pole verdicts disagree, the rationality tolerance is too loose"""
