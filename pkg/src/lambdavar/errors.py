"""Exception hierarchy shared by the library and the command line."""


class LambdaVarError(Exception):
    """Base class for all errors raised by this package."""


class DataError(LambdaVarError, ValueError):
    """Input data is malformed, too short, or degenerate."""


class FitError(LambdaVarError, RuntimeError):
    """A numerical routine failed to converge or produced an invalid optimum."""
