"""Exception hierarchy.

Every error raised on purpose by the package derives from ``ScanError`` so the
CLI can map it to an operational exit code in one place.
"""

from __future__ import annotations


class ScanError(Exception):
    """Base class for all vsixaudit errors."""


# package reading


class PackageError(ScanError):
    pass


class NotAZip(PackageError):
    pass


class ManifestMissing(PackageError):
    pass


class ManifestUnparseable(PackageError):
    pass


class PathTraversal(PackageError):
    def __init__(self, entry: str):
        super().__init__(f"archive entry escapes the package root: {entry!r}")
        self.entry = entry


# source scanning


class FileTooLarge(ScanError):
    def __init__(self, path: str, size: int, limit: int):
        super().__init__(f"{path}: {size} bytes exceeds parse limit of {limit}")
        self.path = path
        self.size = size
        self.limit = limit


# versions / vulnerability database


class VersionUnparseable(ScanError, ValueError):
    pass


class RangeUnparseable(ScanError, ValueError):
    pass


class DbUnparseable(ScanError):
    pass


class DuplicateRecord(ScanError):
    def __init__(self, cve_id: str, package: str):
        super().__init__(f"duplicate vulnerability record {cve_id} for package {package!r}")
        self.cve_id = cve_id
        self.package = package


# threat intelligence


class IntelError(ScanError):
    pass


class IndicatorInvalid(IntelError, ValueError):
    pass


class BackendUnavailable(IntelError):
    """Backend could not answer; safe to retry later.

    ``attempts`` and ``next_delay`` expose the backoff state at the time the
    client gave up.
    """

    def __init__(self, message: str, attempts: int = 0, next_delay: float | None = None):
        super().__init__(message)
        self.attempts = attempts
        self.next_delay = next_delay


class RateLimited(IntelError):
    def __init__(self, message: str, retry_after: float):
        super().__init__(message)
        self.retry_after = retry_after


class AllowlistUnreadable(IntelError):
    pass


# install graph


class UnknownNode(ScanError, KeyError):
    def __init__(self, node: str):
        super().__init__(node)
        self.node = node

    def __str__(self) -> str:
        return f"unknown extension id in install graph: {self.node!r}"


# marketplace


class MarketplaceError(ScanError):
    pass


class EndpointUnavailable(MarketplaceError):
    pass


class SchemaMismatch(MarketplaceError):
    pass


class NotFound(MarketplaceError):
    pass


class IntegrityMismatch(MarketplaceError):
    pass


# reporting


class UnknownRuleId(ScanError):
    pass


class PolicyError(ScanError):
    pass
