"""Exception hierarchy.

``ValidationError`` subclasses map to CLI exit code 1 and
``NumericalError`` subclasses to exit code 2.
"""


class PucciSerrinError(Exception):
    pass


class ValidationError(PucciSerrinError, ValueError):
    """Bad arguments: wrong shapes, violated preconditions."""


class DomainError(ValidationError):
    """Point or radius outside the admissible part of a chart."""


class ArgumentError(ValidationError):
    pass


class DegenerateDomainError(ValidationError):
    pass


class NumericalError(PucciSerrinError, ArithmeticError):
    pass


class BracketError(NumericalError):
    """No sign change in the search bracket ("no solution found in bracket")."""


class InfeasibilityError(NumericalError):
    """Shooting profile lost positivity before the boundary."""


class ConvergenceError(NumericalError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConsistencyError(NumericalError):
    pass


class ResolutionError(NumericalError):
    pass
