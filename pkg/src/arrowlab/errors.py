"""Exception taxonomy shared by all modules.

The CLI maps these onto exit codes: ConfigError -> 1, NumericalError -> 2,
CheckFailure -> 3.  Everything else is a genuine bug and propagates.
"""


class ArrowlabError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ArrowlabError):
    """Invalid configuration: unknown keys, violated invariants, bad parameters."""


class StructuralError(ArrowlabError):
    """Shape/dimension mismatch between objects that should be compatible."""


class ValidationError(ArrowlabError):
    """An object failed its own invariants (non-Hermitian state, incomplete Kraus set, ...)."""


class DomainError(ArrowlabError):
    """Input outside the mathematical domain of an operation."""


class NumericalError(ArrowlabError):
    """A computation produced non-finite values or could not reach its stated resolution."""


class CheckFailure(ArrowlabError):
    """A result violated an acceptance check attached to a command."""
