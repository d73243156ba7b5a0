"""Exception hierarchy shared across the package.

Input/config problems derive from ``DataError``; numerical failures during
fitting derive from ``NumericalError``. The CLI maps the two families to
distinct exit codes.
"""


class FusionError(Exception):
    """Base class for all package errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


class DataError(FusionError, ValueError):
    pass


class NonBinaryIndicator(DataError):
    pass


class NonFiniteValue(DataError):
    pass


class EmptyCell(DataError):
    pass


class PropensityOutOfRange(DataError):
    pass


class CellTooSmall(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class MissingNuisance(DataError):
    pass


class InsufficientData(DataError):
    pass


class NumericalError(FusionError, ArithmeticError):
    pass


class DegenerateDesign(NumericalError):
    pass


class NonConvergence(FusionError, UserWarning):
    """Issued as a warning: the best iterate is still returned."""


class EmptyTrainingCell(NumericalError):
    pass


class ZeroVariance(NumericalError):
    pass
