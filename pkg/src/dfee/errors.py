"""Exception hierarchy shared by all modules."""


class DfeeError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(DfeeError, ValueError):
    """Invalid model, geometry or experiment configuration."""


class DomainError(DfeeError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class RangeError(DfeeError, IndexError):
    """A site, cut or distance falls outside the usable part of the box."""


class NumericalError(DfeeError, ArithmeticError):
    """A numerical routine broke down (non-convergence, singular pivot, overflow)."""


class DegenerateFermiLevelError(NumericalError):
    """The Fermi energy sits on top of an eigenvalue."""


class InsufficientDataError(DfeeError, ValueError):
    """Too few usable samples for a fit or a resampling estimate."""


class EnsembleAbortError(DfeeError, RuntimeError):
    """More than the tolerated fraction of realizations failed."""

    def __init__(self, message, failures=0, n=0):
        super().__init__(message)
        self.failures = failures
        self.n = n
