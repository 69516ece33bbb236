"""Exception hierarchy shared by every pipeline stage."""


class NfpAssocError(Exception):
    """Base class for all errors raised by nfp_assoc."""


class DomainError(NfpAssocError, ValueError):
    """An input lies outside the domain of a channel or model function."""


class NoSolutionError(DomainError):
    """A path-loss target cannot be reached for the given geometry."""


class GenerationError(NfpAssocError):
    """Hard-core placement could not produce the requested point count."""


class DimensionMismatchError(NfpAssocError, ValueError):
    """Matrices or limit vectors disagree on N_SC / N_D."""


class ConfigError(NfpAssocError):
    """Invalid or unknown configuration value."""


class AuditError(NfpAssocError):
    """A solver returned an association that failed the feasibility check."""


class SweepIOError(NfpAssocError, OSError):
    """Writing an experiment result file failed."""
