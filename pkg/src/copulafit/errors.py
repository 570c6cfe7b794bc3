"""Exception hierarchy shared by all copulafit modules."""


class CopulaFitError(Exception):
    """Base class for every error raised by copulafit."""


class ParameterDomainError(CopulaFitError, ValueError):
    """A copula parameter (or Kendall's tau) lies outside the family's space."""


class DomainError(CopulaFitError, ValueError):
    """An argument lies outside the domain of the function being evaluated."""


class NumericError(CopulaFitError, ArithmeticError):
    """A numerical routine (quadrature, root finding) failed to converge."""


class DegenerateDataError(CopulaFitError, ValueError):
    """Input data carry no usable variation (all ties, constant series...)."""


class InsufficientDataError(CopulaFitError, ValueError):
    """Too few observations for the requested computation."""


class FitError(CopulaFitError, RuntimeError):
    """A parameter estimate could not be produced."""
