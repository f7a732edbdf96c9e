"""Exception hierarchy shared by every module."""


class FuncIndexError(Exception):
    """Base class for all package errors."""


class InvalidArgument(FuncIndexError, ValueError):
    pass


class IncompatibleGrids(FuncIndexError, ValueError):
    pass


class NumericalFailure(FuncIndexError, ArithmeticError):
    pass


class DegenerateInput(FuncIndexError, ValueError):
    pass


class DependencyMissing(FuncIndexError, RuntimeError):
    pass
