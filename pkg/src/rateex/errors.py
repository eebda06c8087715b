"""Exception hierarchy.

Two families: ``ValidationError`` for inputs that violate a contract (CLI exit
code 3) and ``NumericalError`` for computations that fail to converge or
produce values outside their guaranteed range (CLI exit code 4).
"""


class RateExError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(RateExError, ValueError):
    pass


class NumericalError(RateExError, ArithmeticError):
    pass


# model-core
class DimensionMismatch(ValidationError):
    pass


class NotPositiveDefinite(ValidationError):
    def __init__(self, name: str, min_eig: float | None = None):
        self.name = name
        self.min_eig = min_eig
        msg = f"matrix {name!r} is not positive definite"
        if min_eig is not None:
            msg += f" (min eigenvalue {min_eig:.3e})"
        super().__init__(msg)


class MarkovStructureViolated(ValidationError):
    pass


class MassNotOne(ValidationError):
    pass


class MarkovViolated(ValidationError):
    def __init__(self, subset: str, residual: float):
        self.subset = subset
        self.residual = residual
        super().__init__(
            f"P violates conditional independence for sensors {subset} given (X, Y0); "
            f"residual {residual:.3e}"
        )


class MarginalMismatch(ValidationError):
    def __init__(self, which: str, residual: float):
        self.which = which
        self.residual = residual
        super().__init__(f"P and Q differ on the {which} marginal (max abs diff {residual:.3e})")


# vg-region
class ConventionMismatch(ValidationError):
    pass


class InvalidOmega(ValidationError):
    pass


class OmegaOnBoundary(ValidationError):
    pass


class GammaOutOfBox(ValidationError):
    pass


class StructureUnsupported(ValidationError):
    pass


class KNotOne(ValidationError):
    pass


# dm-region
class UnknownVariable(ValidationError):
    pass


class OverlappingSets(ValidationError):
    pass


class AlphabetMismatch(ValidationError):
    pass


class BudgetExceeded(ValidationError):
    pass


class AuxIndependenceViolated(ValidationError):
    pass


class ExponentExceedsEntropy(ValidationError):
    pass


# qbt-sim
class TooManyOutcomes(ValidationError):
    pass


class AlphaZero(ValidationError):
    pass


class InvalidRates(ValidationError):
    pass


class TrialsZero(ValidationError):
    pass


# ep-bounds
class ExponentOutOfDomain(ValidationError):
    pass


class QuadratureNotConverged(NumericalError):
    pass


class LogArgumentBelowOne(NumericalError):
    pass
