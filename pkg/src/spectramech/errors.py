"""Exception hierarchy shared across the package.

The CLI maps these onto distinct process exit codes, so library code
should raise the most specific class that applies.
"""


class SpectramechError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(SpectramechError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class NumericsError(SpectramechError):
    """A numerical evaluation produced a non-finite or unusable result.

    Carries a ``diagnostics`` dict describing where the evaluation broke.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class SolverError(SpectramechError):
    """An iterative solver failed to converge within its iteration cap."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConfigError(SpectramechError):
    """A configuration file could not be parsed at all."""


class ValidationError(SpectramechError):
    """A parsed configuration or scenario violates a model invariant.

    ``failures`` lists human-readable descriptions of every violated check.
    """

    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = list(failures or [])
