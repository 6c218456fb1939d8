"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`SpatialBoundaryError`.  Two intermediate classes split them into
bad input (:class:`InputError`) and numerical failure
(:class:`NumericalError`); the CLI maps each family to its own exit code.
"""


class SpatialBoundaryError(Exception):
    """Base class for all package errors."""


class InputError(SpatialBoundaryError, ValueError):
    """Input data or configuration violates a documented precondition."""


class NumericalError(SpatialBoundaryError, ArithmeticError):
    """A computation could not produce a trustworthy number."""


class ParseError(InputError):
    """A CSV file could not be parsed.  Carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f"{':' if where else 'line '}{line}"
        super().__init__(f"{where}: {message}" if where else message)


# -- estimator -----------------------------------------------------------------
class InvalidSample(InputError):
    pass


class InvalidBandwidth(InputError):
    pass


class EmptyGrid(InputError):
    pass


class InvalidGrid(InputError):
    pass


class IllConditioned(NumericalError):
    """The 2x2 weighted normal system at an evaluation point is unusable."""


class AllPointsIllConditioned(IllConditioned):
    pass


# -- bandwidth selection -------------------------------------------------------
class TooFewObservations(InputError):
    pass


class NoValidPredictions(NumericalError):
    pass


# -- boundary ------------------------------------------------------------------
class InsufficientCurve(NumericalError):
    pass


class InvalidThreshold(InputError):
    pass


class ReferencePointInvalid(NumericalError):
    pass


class DegenerateData(InputError):
    pass


class ZeroDistance(InputError):
    pass


class UnconvergedFit(NumericalError):
    pass


# -- monte carlo ---------------------------------------------------------------
class InvalidN(InputError):
    pass


# -- applied statistics --------------------------------------------------------
class EmptySources(InputError):
    pass


class NoBins(InputError):
    pass


class TooFewRows(InputError):
    pass


class Collinear(NumericalError):
    pass


class ZeroVariance(InputError):
    pass


class DegenerateMarginal(InputError):
    pass


class NotStandardized(InputError):
    pass


class SingleClass(InputError):
    pass


class CompleteSeparation(NumericalError):
    pass


# -- cli -----------------------------------------------------------------------
class InvalidConfig(InputError):
    pass
