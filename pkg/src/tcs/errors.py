"""Exception hierarchy shared by all tcs modules."""


class TCSError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(TCSError, ValueError):
    """Bad input: wrong shape, out-of-range index, non-finite entries."""


class ParseError(ValidationError):
    """A matrix file could not be parsed.

    ``line`` and ``column`` are 1-based and may be ``None`` when the
    location is not meaningful (e.g. a non-square matrix).
    """

    def __init__(self, message, path=None, line=None, column=None):
        loc = []
        if path is not None:
            loc.append(str(path))
        if line is not None:
            loc.append(f"line {line}")
        if column is not None:
            loc.append(f"column {column}")
        prefix = ", ".join(loc)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.path = path
        self.line = line
        self.column = column


class NumericalError(TCSError, ArithmeticError):
    """Base class for failures of a numerical procedure."""


class FeasibilityError(NumericalError):
    """The assembled Gramian W(p, T) is not positive definite."""

    def __init__(self, message, lambda_min=None):
        super().__init__(message)
        self.lambda_min = lambda_min


class AccuracyError(NumericalError):
    """Quadrature did not reach its target within the step budget."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class LineSearchError(NumericalError):
    """Armijo backtracking ran out of halvings."""
