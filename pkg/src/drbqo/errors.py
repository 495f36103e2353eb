class DRBQOError(Exception):
    """Base class for errors raised by this package."""


class ContractViolation(DRBQOError, ValueError):
    """An argument broke a documented precondition."""


class ConfigurationError(DRBQOError, ValueError):
    """An option or config value is not supported."""


class NumericalError(DRBQOError, ArithmeticError):
    """A factorization or iterative solve did not succeed."""
