"""Exception types shared across the package."""


class SpectraLabError(Exception):
    pass


class UnknownLetter(SpectraLabError, ValueError):
    pass


class WrapNotAdmissible(SpectraLabError, ValueError):
    pass


class NotAdmissible(SpectraLabError, ValueError):
    pass


class NumericFailure(SpectraLabError, ArithmeticError):
    pass


class MissingTableEntry(SpectraLabError, KeyError):
    pass


class NoAccumulation(SpectraLabError):
    pass


class EmptyAfterTrim(SpectraLabError):
    pass


class PieceNotRealizable(SpectraLabError):
    pass


class NotATransient(SpectraLabError, ValueError):
    pass


class ExtractionInfeasible(SpectraLabError):
    def __init__(self, message, longest_good_run=0):
        super().__init__(message)
        self.longest_good_run = longest_good_run


class NoExtraction(SpectraLabError):
    pass


class NotInFamily(SpectraLabError, ValueError):
    pass


class NotComparable(SpectraLabError):
    pass


class MissingDecomposition(SpectraLabError):
    pass


class ModelError(SpectraLabError, ValueError):
    pass
