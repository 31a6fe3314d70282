"""Exception hierarchy.

Validation errors (bad input, violated preconditions) map to CLI exit code 2,
infeasibility errors to exit code 4.
"""


class PoincareKitError(Exception):
    exit_code = 1


class ValidationError(PoincareKitError, ValueError):
    exit_code = 2


class InfeasibleError(PoincareKitError):
    exit_code = 4


class DisconnectedGraph(ValidationError):
    pass


class NonpositiveWeight(ValidationError):
    pass


class NegativeInput(ValidationError):
    pass


class TooLarge(ValidationError):
    pass


class InvalidExponent(ValidationError):
    pass


class WindowViolated(ValidationError):
    pass


class NotUpperGradient(ValidationError):
    pass


class DegenerateDenominator(PoincareKitError):
    """Lip f vanishes on CB while f oscillates on B; an internal consistency error."""


class Inadmissible(ValidationError):
    def __init__(self, message, attained=None, tau=None):
        super().__init__(message)
        self.attained = attained
        self.tau = tau


class NoPathBound(ValidationError):
    def __init__(self, message, lhs=None, rhs=None):
        super().__init__(message)
        self.lhs = lhs
        self.rhs = rhs


class ParseError(ValidationError):
    pass


class NoFeasiblePath(InfeasibleError):
    pass


class GapInfeasible(InfeasibleError):
    pass
