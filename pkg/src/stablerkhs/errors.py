"""Exception hierarchy shared across the package."""


class StableRKHSError(Exception):
    """Base class for all package errors."""


class DomainError(StableRKHSError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class ConfigError(StableRKHSError, ValueError):
    """A configuration file or parameter block is malformed."""


class StructuralError(StableRKHSError):
    """A matrix violates a structural contract (symmetry, PSD)."""


class NumericalError(StableRKHSError):
    """A numerical routine failed or a numeric invariant was violated."""


class EnumerationCapError(DomainError):
    """Exact sign-vector enumeration was requested beyond the configured cap."""
