"""Exception hierarchy.

Every error raised by the package derives from :class:`StrataBootError` so
callers (and the CLI) can map them to exit codes.
"""


class StrataBootError(Exception):
    """Base class for all package errors."""


class InputError(StrataBootError, ValueError):
    """Malformed input data (exit code 2 in the CLI)."""


class NonFiniteOutcome(InputError):
    pass


class EmptySample(InputError):
    pass


class DomainError(StrataBootError, ValueError):
    """An argument lies outside the mathematical domain of a function."""


class DesignError(StrataBootError):
    """The experimental design does not support the requested method (exit 3)."""


class EmptyStratumArm(DesignError, InputError):
    """A stratum has no treated or no control units."""


class SingletonStratum(DesignError):
    pass


class InsufficientArm(DesignError):
    """Some arm has fewer than two units, so its sample variance is undefined."""


class NotSharpEligible(DesignError):
    """Some stratum violates 2 <= n_m1 <= n_m - 2."""


class NotPaired(DesignError):
    pass


class TooFewPairs(DesignError):
    pass


class TooLargeToEnumerate(StrataBootError):
    """The randomization distribution has too many assignments (exit 4)."""

    def __init__(self, count, limit):
        super().__init__(
            f"{count} assignments exceeds the enumeration limit of {limit}"
        )
        self.count = count
        self.limit = limit


class DegenerateBootstrap(StrataBootError):
    """Too many bootstrap replicates had a zero variance estimate."""

    def __init__(self, n_degenerate, B):
        super().__init__(
            f"{n_degenerate} of {B} bootstrap replicates have zero estimated "
            "variance; the bootstrap distribution is degenerate"
        )
        self.n_degenerate = n_degenerate
        self.B = B


class IdentityViolation(StrataBootError, AssertionError):
    def __init__(self, message, stratum=None):
        super().__init__(message)
        self.stratum = stratum
