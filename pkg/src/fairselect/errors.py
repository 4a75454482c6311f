"""Exception hierarchy shared across the package."""


class FairSelectError(Exception):
    """Base class for all package errors."""


class ModelError(FairSelectError, ValueError):
    """Invalid population model input.

    ``field`` names the offending input (for example ``score_pmf.a0_y1``) so
    file loaders can report a path into the document.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class NonNormalizedPmf(ModelError):
    pass


class UnsortedSupport(ModelError):
    pass


class OutOfRangeProbability(ModelError):
    pass


class ConfigError(FairSelectError, ValueError):
    """Invalid selection configuration."""


class BudgetExceeded(FairSelectError):
    """Instance too large for the requested exact computation."""


class LimitExceeded(BudgetExceeded):
    """Instance too large for the brute-force oracle."""


class NoRootBracketed(FairSelectError):
    """The fairness gap never changes sign on the scanned range."""

    def __init__(self, message, scanned=None):
        super().__init__(message)
        self.scanned = scanned


class InfeasibleConstraint(FairSelectError):
    pass


class EngineInvariantError(FairSelectError, AssertionError):
    """An internal numerical invariant failed (normalization, exchangeability)."""


class ParseError(FairSelectError, ValueError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


class SchemaError(FairSelectError, ValueError):
    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class NonMonotoneCdf(ModelError):
    pass


class InconsistentSupport(ModelError):
    pass
