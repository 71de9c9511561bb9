class FuncexpError(Exception):
    """Base class for errors raised by this package."""


class DegenerateDesignError(FuncexpError, ValueError):
    """Two runs of a design coincide, so a distance-based criterion is undefined."""


class IllConditionedError(FuncexpError, ArithmeticError):
    """The correlation matrix could not be factorized even with the largest jitter."""
