"""Exception hierarchy shared across the package."""


class SamplerError(Exception):
    """Base class for all package errors."""


class ConfigError(SamplerError, ValueError):
    """Invalid or inconsistent user input."""


class SingularFimError(SamplerError):
    """A Fisher information matrix is not positive definite.

    ``theta_index`` identifies the offending member of a parameter grid
    when the error was raised during a worst-case evaluation.
    """

    def __init__(self, message, theta_index=None):
        super().__init__(message)
        self.theta_index = theta_index


class InfeasibleError(SamplerError):
    """The design constraints admit no strictly feasible point.

    ``certificate`` carries a dict describing why, e.g. the smallest
    achievable ratio ``max_p mu_p / lambda_p`` under the budget.
    """

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate or {}


class InfeasibleStartError(InfeasibleError):
    """No positive definite starting point exists for the relaxed solve."""


class MaxIterationsError(SamplerError):
    """An iterative solver exhausted its iteration budget."""


class TooLargeError(SamplerError):
    """An enumeration or grid search exceeds its size guard."""


class AllSingularError(SamplerError):
    """Every candidate sample set yielded a singular FIM."""


class EmptyGridError(SamplerError, ValueError):
    """An estimation grid has an empty dimension."""
