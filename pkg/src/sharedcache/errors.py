"""Exception types raised across the simulator."""

from __future__ import annotations


class CodedCachingError(Exception):
    """Base class for every error raised by this package."""


class ParamsInvalid(CodedCachingError, ValueError):
    pass


class NonIntegralCacheQuota(ParamsInvalid):
    """M*F/catalog_size is not an integer number of bits."""


class QuotaNonIntegral(NonIntegralCacheQuota):
    """Raised by the online cache update for a non-integral per-file quota."""


class FractionNotRealizable(ParamsInvalid):
    """Exact-fraction subfile sizes are not whole bits for this file size."""


class NotAPartition(CodedCachingError, ValueError):
    pass


class RoundOutOfRange(CodedCachingError, IndexError):
    pass


class ParamsMismatch(CodedCachingError, ValueError):
    pass


class NonDistinctDemand(CodedCachingError, ValueError):
    pass


class UndecodableSubfile(CodedCachingError):
    """A user cannot recover a wanted subfile. Always a scheme bug."""


class ArrivalAlreadyPopular(CodedCachingError, ValueError):
    pass


class DemandOutsidePopularSet(CodedCachingError, ValueError):
    pass


class ZeroMemory(CodedCachingError, ZeroDivisionError):
    """Closed forms with a (N-M)/M prefactor are undefined at M=0.

    ``limit`` carries the M -> 0 limit of the expression (pure unicast time).
    """

    def __init__(self, limit, message: str | None = None):
        self.limit = limit
        super().__init__(message or f"cache size is zero; limit value is {limit}")


class IdentityViolated(CodedCachingError, AssertionError):
    def __init__(self, name: str, s: int | None, profile, lhs, rhs):
        self.name, self.s, self.profile, self.lhs, self.rhs = name, s, profile, lhs, rhs
        super().__init__(f"identity {name!r} fails at s={s}, L={profile}: {lhs} != {rhs}")


class TooLarge(CodedCachingError):
    """Brute-force search exceeds the configured budget."""


class CertificateFailed(CodedCachingError):
    """The constructed set is not a generalized independent set."""


class UnknownCodeParameters(CodedCachingError, KeyError):
    pass


class DimensionMismatch(CodedCachingError, ValueError):
    pass


class TooManyErrors(CodedCachingError, ValueError):
    pass


class UncorrectableSyndrome(CodedCachingError):
    pass


class ConfigError(CodedCachingError, ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where = f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}".strip() if where else message)
