"""Error taxonomy shared by all subsystems.

Every error carries the process exit code the CLI maps it to, so the
mapping lives in one place and stays 1:1.
"""


class PRLatencyError(Exception):
    exit_code = 1


class AuthError(PRLatencyError):
    exit_code = 3


class NotFoundError(PRLatencyError):
    exit_code = 4


class RateLimitedError(PRLatencyError):
    exit_code = 5


class TransportError(PRLatencyError):
    exit_code = 6


class ArchiveIOError(PRLatencyError):
    exit_code = 7


class SchemaMismatchError(PRLatencyError):
    exit_code = 8


class CorruptArchiveError(PRLatencyError):
    exit_code = 9


class ParseError(PRLatencyError, ValueError):
    exit_code = 10


class DomainError(PRLatencyError, ValueError):
    exit_code = 11


class DegenerateError(PRLatencyError, ValueError):
    exit_code = 12


class NonFiniteError(PRLatencyError, ArithmeticError):
    exit_code = 13


class FeatureMismatchError(PRLatencyError, ValueError):
    exit_code = 14


class TooFewRowsError(PRLatencyError, ValueError):
    exit_code = 15


class MissingContextError(PRLatencyError):
    exit_code = 16


class LeakageError(PRLatencyError, AssertionError):
    """A train row is not strictly older than every test row."""

    exit_code = 17


class ConfigError(PRLatencyError, ValueError):
    exit_code = 18


EXIT_CODES = {
    cls.__name__: cls.exit_code
    for cls in (
        PRLatencyError,
        AuthError,
        NotFoundError,
        RateLimitedError,
        TransportError,
        ArchiveIOError,
        SchemaMismatchError,
        CorruptArchiveError,
        ParseError,
        DomainError,
        DegenerateError,
        NonFiniteError,
        FeatureMismatchError,
        TooFewRowsError,
        MissingContextError,
        LeakageError,
        ConfigError,
    )
}
