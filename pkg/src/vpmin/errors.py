"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    pass


class ConstraintViolation(ValueError):
    """A density is outside the admissible set (wrong mass, infinite norm)."""


class NumericFailure(RuntimeError):
    """An iterative procedure failed to bracket or converge.

    ``diagnostics`` carries whatever trace the failing routine collected.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class GridTooSmall(NumericFailure):
    pass
