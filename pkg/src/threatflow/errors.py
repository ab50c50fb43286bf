"""Exception hierarchy shared across the package.

The CLI maps every ThreatflowError to exit code 2 (data error); anything
else is a bug and propagates.
"""


class ThreatflowError(Exception):
    """Base class for all domain errors raised by this package."""


class ParseError(ThreatflowError):
    """A record could not be turned into a ThreatEvent.

    ``field`` names the missing or malformed field when known.
    """

    def __init__(self, field: str, message: str | None = None):
        self.field = field
        super().__init__(message or f"missing or invalid field: {field!r}")


class CredentialError(ThreatflowError):
    """The feed rejected our credentials (HTTP 401/403). Not retryable."""


class EmptyInput(ThreatflowError):
    """An operation that needs at least one event/count got none."""


class TooFewNodes(ThreatflowError):
    """Graph construction needs at least two eligible countries."""


class EmptyStudy(ThreatflowError):
    """A case-study filter removed every event.

    ``clause`` identifies which filter clause emptied the corpus.
    """

    def __init__(self, clause: str):
        self.clause = clause
        super().__init__(f"no events left after applying the {clause} clause")


class InsufficientData(ThreatflowError):
    """A series or panel is too short for the requested computation."""


class FitError(ThreatflowError):
    """A model could not be fitted (e.g. singular regression system)."""


class ConvergenceError(ThreatflowError):
    """An iterative numerical routine did not converge.

    ``residual`` carries the final residual norm when available.
    """

    def __init__(self, message: str, residual: float | None = None):
        self.residual = residual
        super().__init__(message)
