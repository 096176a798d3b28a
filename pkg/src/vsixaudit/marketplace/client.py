from __future__ import annotations

import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator

import requests

from ..deps.semver import parse_version
from ..errors import EndpointUnavailable, IntegrityMismatch, NotFound, SchemaMismatch, VersionUnparseable
from ..model import ExtensionIdentity
from ..ratelimit import RateLimiter
from .profile import EndpointProfile, get_path
from .store import PackageStore


@dataclass(frozen=True)
class ExtensionListing:
    identity: ExtensionIdentity
    display_name: str
    install_count: int
    publisher_verified: bool
    published_at: str
    updated_at: str
    versions: tuple[str, ...]
    listing_url: str = ""

    def __post_init__(self) -> None:
        if not self.versions:
            raise ValueError(f"{self.identity.id}: listing has no versions")
        if self.install_count < 0:
            raise ValueError(f"{self.identity.id}: negative install count")


@dataclass(frozen=True)
class ListingPage:
    page: int
    page_size: int
    items: tuple[ExtensionListing, ...]
    raw_count: int = 0  # listings the server returned before client-side filtering


@dataclass(frozen=True)
class DownloadResult:
    identity: ExtensionIdentity
    data: bytes = field(repr=False)
    sha256: str
    cache_hit: bool


def sort_versions_desc(versions) -> list[str]:
    def key(v: str):
        try:
            return (1, parse_version(v).key(), v)
        except VersionUnparseable:
            return (0, (), v)

    return sorted(set(versions), key=key, reverse=True)


class MarketplaceClient:
    def __init__(
        self,
        profile: EndpointProfile,
        base_url: str,
        session: requests.Session | None = None,
        limiter: RateLimiter | None = None,
        max_retries: int = 3,
        backoff: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
        timeout: float = 60.0,
    ):
        self.profile = profile
        self.base_url = base_url.rstrip("/")
        self.session = session or requests.Session()
        self.limiter = limiter
        self.max_retries = max_retries
        self.backoff = backoff
        self.sleep = sleep
        self.timeout = timeout
        self.requests_made = 0

    # -- transport

    def _request(self, method: str, url: str, **kw) -> requests.Response:
        delay = self.backoff
        last = ""
        for attempt in range(self.max_retries + 1):
            if self.limiter is not None:
                self.limiter.acquire()
            self.requests_made += 1
            try:
                resp = self.session.request(method, url, timeout=self.timeout, **kw)
            except requests.RequestException as exc:
                last = str(exc)
            else:
                if resp.status_code == 404:
                    raise NotFound(url)
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = f"HTTP {resp.status_code}"
                elif resp.status_code >= 400:
                    raise EndpointUnavailable(f"{url}: HTTP {resp.status_code}")
                else:
                    return resp
            if attempt < self.max_retries:
                self.sleep(delay)
                delay *= 2
        raise EndpointUnavailable(f"{url}: {last} after {self.max_retries + 1} attempts")

    def _values(self, **extra) -> dict[str, Any]:
        return {"base": self.base_url, **extra}

    # -- listings

    def _listing(self, raw: Any) -> ExtensionListing:
        f = self.profile.fields
        publisher = get_path(raw, f["publisher"])
        name = get_path(raw, f["name"])
        versions = get_path(raw, f["versions"])
        if not isinstance(publisher, str) or not isinstance(name, str) or not isinstance(versions, list):
            raise SchemaMismatch(f"listing lacks publisher/name/versions: {str(raw)[:200]}")
        versions = [v for v in versions if isinstance(v, str)]
        if not versions:
            raise SchemaMismatch(f"{publisher}.{name}: empty version list")
        ordered = sort_versions_desc(versions)
        try:
            installs = int(float(get_path(raw, f.get("install_count", "")) or 0))
        except (TypeError, ValueError):
            raise SchemaMismatch(f"{publisher}.{name}: install count is not a number") from None
        identity = ExtensionIdentity(publisher.lower(), name.lower(), ordered[0])
        url = get_path(raw, f.get("listing_url", "")) or ""
        if not url and self.profile.listing_url:
            url = self.profile.listing_url.format(base=self.base_url, publisher=publisher, name=name)
        return ExtensionListing(
            identity=identity,
            display_name=str(get_path(raw, f.get("display_name", "")) or name),
            install_count=max(installs, 0),
            publisher_verified=bool(get_path(raw, f.get("publisher_verified", ""))),
            published_at=str(get_path(raw, f.get("published_at", "")) or ""),
            updated_at=str(get_path(raw, f.get("updated_at", "")) or ""),
            versions=tuple(ordered),
            listing_url=str(url),
        )

    def query_listings(self, page: int = 1, page_size: int = 100, updated_since: str | None = None) -> ListingPage:
        req = self.profile.query.render(self._values(page=page, page_size=page_size, updated_since=updated_since))
        resp = self._request(req.pop("method"), req.pop("url"), **req)
        try:
            body = resp.json()
        except ValueError:
            raise SchemaMismatch("listing response is not JSON") from None
        raw_items = get_path(body, self.profile.results_path)
        if raw_items is None:
            raw_items = []
        if not isinstance(raw_items, list):
            raise SchemaMismatch(f"{self.profile.results_path} is not a list")
        items = [self._listing(r) for r in raw_items]
        if updated_since:
            # Enforced client-side too, for galleries without a server-side filter.
            items = [i for i in items if i.updated_at >= updated_since]
        return ListingPage(page, page_size, tuple(items), len(raw_items))

    def iter_listings(self, updated_since: str | None = None, page_size: int = 100) -> Iterator[ExtensionListing]:
        page = 1
        while True:
            got = self.query_listings(page, page_size, updated_since)
            yield from got.items
            if got.raw_count < page_size:
                return
            page += 1

    # -- packages

    def fetch_versions(self, identity: ExtensionIdentity) -> list[str]:
        spec = self.profile.versions
        if spec is None:
            raise SchemaMismatch(f"profile {self.profile.name} has no versions endpoint")
        req = spec.render(self._values(publisher=identity.publisher, name=identity.name))
        resp = self._request(req.pop("method"), req.pop("url"), **req)
        try:
            versions = get_path(resp.json(), self.profile.versions_path)
        except ValueError:
            raise SchemaMismatch("versions response is not JSON") from None
        if not isinstance(versions, list) or not any(isinstance(v, str) for v in versions):
            raise NotFound(identity.id)
        return sort_versions_desc(v for v in versions if isinstance(v, str))

    def download(
        self,
        identity: ExtensionIdentity,
        store: PackageStore | None = None,
        expected_sha256: str | None = None,
        install_count: int = 0,
        record: bool = True,
    ) -> DownloadResult:
        if store is not None:
            entry = store.lookup(identity)
            if entry is not None and store.path_for(entry.sha256).exists():
                return DownloadResult(identity, store.read(entry), entry.sha256, True)
        url = self.profile.download_url.format(
            base=self.base_url, publisher=identity.publisher, name=identity.name, version=identity.version
        )
        data = self._request("GET", url).content
        if not data:
            raise EndpointUnavailable(f"{url}: empty body")
        if store is not None:
            sha = store.write_blob(data, expected_sha256)
            if record:
                store.record(identity, sha, len(data), install_count)
        else:
            sha = hashlib.sha256(data).hexdigest()
            if expected_sha256 is not None and sha != expected_sha256.lower():
                raise IntegrityMismatch(f"expected sha256 {expected_sha256}, got {sha}")
        return DownloadResult(identity, data, sha, False)


@dataclass
class CrawlStats:
    listed: int = 0
    downloaded: int = 0
    cache_hits: int = 0
    failed: list[str] = field(default_factory=list)


def crawl(
    client: MarketplaceClient,
    store: PackageStore,
    updated_since: str | None = None,
    page_size: int = 100,
    workers: int = 4,
    limit: int | None = None,
) -> CrawlStats:
    """Download the latest version of every listed extension into ``store``.

    Downloads run on up to ``workers`` threads, but ledger lines are appended
    in listing order, so an interrupted crawl resumed later leaves the same
    ledger as one uninterrupted run. ``limit`` caps new downloads.
    """
    stats = CrawlStats()
    listings = list(client.iter_listings(updated_since, page_size))
    stats.listed = len(listings)

    todo = []
    for lst in listings:
        if store.lookup(lst.identity) is not None:
            stats.cache_hits += 1
            continue
        if limit is not None and len(todo) >= limit:
            break
        todo.append(lst)

    def fetch(lst: ExtensionListing) -> DownloadResult:
        return client.download(lst.identity, store, record=False)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = [pool.submit(fetch, lst) for lst in todo]
        for lst, fut in zip(todo, futures):
            try:
                res = fut.result()
            except (NotFound, EndpointUnavailable, SchemaMismatch) as exc:
                stats.failed.append(f"{lst.identity}: {exc}")
                continue
            store.record(lst.identity, res.sha256, len(res.data), lst.install_count)
            stats.downloaded += 1
    return stats
