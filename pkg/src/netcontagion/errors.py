"""Exception types shared across the package.

Two families matter for the CLI exit-code contract: ``DataError`` (bad or
insufficient input, exit code 1) and ``NumericalError`` (estimation failed
on valid input, exit code 2).
"""


class DataError(ValueError):
    """Invalid, malformed, or insufficient input data."""


class PanelFormatError(DataError):
    """A panel CSV file failed validation.

    Carries the file and line number when they are known.
    """

    def __init__(self, message, file=None, line=None):
        loc = ""
        if file is not None:
            loc = f"{file}:{line}: " if line is not None else f"{file}: "
        super().__init__(f"{loc}{message}")
        self.file = file
        self.line = line


class CollinearityError(DataError):
    """Design matrix is rank deficient; names the offending terms."""

    def __init__(self, terms):
        self.terms = tuple(terms)
        super().__init__(
            "collinear design: term(s) %s are linearly dependent on the others"
            % ", ".join(repr(t) for t in self.terms)
        )


class NumericalError(RuntimeError):
    """Estimation failed numerically on otherwise valid input."""


class SeparationError(NumericalError):
    """Logit fit diverged, indicating perfect or quasi-perfect separation."""


class ConvergenceError(NumericalError):
    """Iterative fit did not converge within the iteration budget."""
