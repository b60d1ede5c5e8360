"""Shared exception taxonomy.

Every failure surfaced to callers falls into one of three buckets:
configuration problems (bad flags, unsatisfiable splits, malformed
datasets), contract violations (a function was handed values that break
its documented preconditions), and runtime training failures.
"""


class GmixlabError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(GmixlabError):
    """Invalid or unsatisfiable user configuration."""


class DatasetParseError(ConfigError):
    """A dataset file is missing, malformed, or internally inconsistent.

    Messages always name the offending file and, where meaningful, the
    one-based line number.
    """


class ContractError(GmixlabError):
    """A documented precondition of an internal API was violated."""


class DomainError(ContractError):
    """A numeric argument lies outside the mathematical domain of a function."""


class NonFiniteError(GmixlabError):
    """A forward pass produced NaN or infinity."""


class TrainingError(GmixlabError):
    """Training could not run to completion."""


class DivergenceError(TrainingError):
    """The optimisation produced a non-finite loss and was aborted.

    Carries the partial run report as a diagnostic.
    """

    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = report
