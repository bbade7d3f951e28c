"""Exception hierarchy shared by every module."""


class WowError(Exception):
    """Base class for all library errors."""


class InvalidMeasure(WowError, ValueError):
    pass


class EmptyMeasure(InvalidMeasure):
    pass


class DimMismatch(WowError, ValueError):
    pass


class DimNotOne(DimMismatch):
    """A one-dimensional routine received points of another dimension."""


class MarginalMismatch(WowError, ValueError):
    pass


class IndexMismatch(WowError, LookupError):
    """A marginal or law is not an atom of the nested measure it was looked up in."""


class NumericalFailure(WowError, RuntimeError):
    pass


class BudgetExceeded(WowError, RuntimeError):
    pass


class NotEqualSize(WowError, ValueError):
    pass


class PushforwardMismatch(WowError, ValueError):
    pass


class UnsupportedNorm(WowError, ValueError):
    pass
