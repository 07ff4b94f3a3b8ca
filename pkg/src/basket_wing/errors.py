"""Exception and warning classes shared across the package."""


class BasketWingError(Exception):
    """Base class for all library errors."""


class DomainError(BasketWingError, ValueError):
    """An argument lies outside the domain where a formula is defined."""


class ArbitrageError(DomainError):
    """An option price violates the static no-arbitrage bounds."""


class BoundaryError(DomainError):
    """An option price sits on a no-arbitrage boundary (implied vol 0 or infinite)."""


class MatrixError(DomainError):
    """A covariance or correlation matrix is not symmetric positive definite,
    or is too badly conditioned to be used."""


class OptimizationError(BasketWingError, ArithmeticError):
    """A solver failed to produce a point satisfying its optimality conditions."""


class RegimeError(DomainError):
    """The requested formula does not apply in the detected parameter regime."""


class IntegrationError(BasketWingError, ArithmeticError):
    """A numerical integral did not converge."""


class MomentError(DomainError):
    """A required exponential moment of the time change does not exist."""


class ConfigError(BasketWingError, ValueError):
    """A run configuration is malformed or incomplete."""


class PrecisionWarning(UserWarning):
    """A numerical oracle could not confirm its accuracy target."""


class ConditioningWarning(UserWarning):
    """Inputs are close to a configuration where the formulas degenerate."""


class AssumptionWarning(UserWarning):
    """A heuristic check of an asymptotic formula's hypotheses did not pass."""


class InsufficientPathsWarning(UserWarning):
    """A Monte Carlo estimate recorded no hits in the region of interest."""
