"""Exception hierarchy shared by the library and the command line front end.

The three leaf categories map onto CLI exit codes: configuration problems
exit 2, data problems exit 3 and numerical failures exit 4.
"""


class GaspError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1
    code = "error"


class ConfigError(GaspError):
    """Invalid configuration: bad option combinations, degenerate setups."""

    exit_code = 2
    code = "config"


class DataError(GaspError):
    """Malformed or inconsistent input data."""

    exit_code = 3
    code = "data"


class NumericError(GaspError):
    """Numerical failure (singular matrices, failed factorizations, ...)."""

    exit_code = 4
    code = "numeric"


class SingularCovarianceError(NumericError):
    """Cholesky factorization failed even after jitter escalation.

    Carries the jitter levels that were attempted so callers can report
    how hard the factorization was pushed before giving up.
    """

    def __init__(self, message, jitters=()):
        super().__init__(message)
        self.jitters = tuple(jitters)


class RankError(NumericError):
    """A matrix that must have full column rank does not."""


class DegenerateOutputError(ConfigError):
    """Outputs lie in the column space of the mean basis; nothing to fit."""
