"""Exception types shared across the package."""


class MagsourceError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(MagsourceError, ValueError):
    """A physical or numerical parameter is outside its admissible range."""


class ThresholdError(MagsourceError, ValueError):
    """The energy coincides with a Landau level, where the Green function diverges."""

    def __init__(self, epsilon, level):
        self.epsilon = epsilon
        self.level = level
        super().__init__(
            f"epsilon={epsilon:g} lies on the Landau level l={level} "
            f"(threshold 2l+1={2 * level + 1}); the Green function diverges there"
        )


class SlowConvergenceError(MagsourceError, ArithmeticError):
    """The channel series could not reach the requested tolerance (plane z=0)."""


class DomainError(MagsourceError, ValueError):
    """Argument outside the documented validity window of a function."""


class CausticDivergence(MagsourceError, ArithmeticError):
    """The classical density diverges (destination on a caustic)."""


class NotApplicableError(MagsourceError, TypeError):
    """Operation requested on a solution kind that does not support it."""


class ContractViolation(MagsourceError, ValueError):
    """Inputs violate an operation's structural contract."""
