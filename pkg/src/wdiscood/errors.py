"""Exception hierarchy shared by every module.

Errors fall in two families so the command line can map them to exit codes:
``DataError`` (bad input files, shapes, labels) and ``NumericalError``
(decompositions that fail or produce a degenerate model).
"""


class WDiscOODError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class DataError(WDiscOODError, ValueError):
    exit_code = 2


class NumericalError(WDiscOODError, ArithmeticError):
    exit_code = 3


class DimMismatch(DataError):
    pass


class NonSquare(DimMismatch):
    pass


class NonFinite(DataError):
    pass


class EmptyClass(DataError):
    pass


class EmptyInput(DataError):
    pass


class ZeroVector(DataError):
    pass


class KTooLarge(DataError):
    pass


class BadMagic(DataError):
    pass


class VersionUnsupported(DataError):
    pass


class TruncatedPayload(DataError):
    pass


class ManifestError(DataError):
    pass


class NotSymmetric(NumericalError):
    pass


class NotConverged(NumericalError):
    pass


class NotPSD(NumericalError):
    pass


class DegenerateModel(NumericalError):
    pass
