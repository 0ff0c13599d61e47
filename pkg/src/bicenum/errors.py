"""Exception hierarchy.

Input problems derive from :class:`InputError` and numerical breakdowns
from :class:`NumericalError`; the CLI maps them to exit codes 2 and 3.
"""


class BicEnumError(Exception):
    pass


class InputError(BicEnumError, ValueError):
    pass


class NumericalError(BicEnumError, ArithmeticError):
    pass


class DimMismatch(InputError):
    pass


class EmptySubset(InputError):
    pass


class TooManyClusters(InputError):
    pass


class UnknownCriterion(InputError):
    pass


class CurveTooShort(InputError):
    pass


class ZeroMeanColumn(InputError):
    pass


class ParseError(InputError):
    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class NotSpd(NumericalError):
    pass


class Degenerate(NumericalError):
    pass


class InvalidCluster(NumericalError):
    pass


class ZeroVariance(NumericalError):
    pass


class NoValidCandidate(NumericalError):
    pass


class AllCandidatesInvalid(NumericalError):
    pass
