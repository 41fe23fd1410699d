"""Exception taxonomy for the laboratory.

Every error raised by this package derives from NonceLabError so callers can
catch the whole family with one clause. The subclasses separate mathematical
domain violations from operational failures (alignment, recovery, config),
which matters for the CLI exit-code contract: analysis failures exit 2,
configuration problems exit 1.
"""


class NonceLabError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(NonceLabError):
    """A mathematical precondition was violated (bad point, bad scalar, mixed fields)."""


class NonInvertible(DomainError):
    """Inversion of a non-invertible element was requested."""


class ConfigError(NonceLabError):
    """Invalid or inconsistent configuration input."""


class StatError(NonceLabError):
    """A statistical routine received data it cannot meaningfully process."""


class AlignmentError(NonceLabError):
    """No usable swap windows could be located in a trace."""


class RecoveryFailed(NonceLabError):
    """Key recovery exhausted its search without finding a verified key."""
