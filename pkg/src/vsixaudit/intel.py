"""Threat-intelligence lookups for file hashes and network indicators.

Backends answer "how many engines looked at this indicator, and how many
flagged it". :class:`IntelClient` wraps a backend with a TTL cache (memory
plus optional on-disk files), per-indicator request coalescing, a rate
limiter and retry with exponential backoff.
"""

from __future__ import annotations

import hashlib
import ipaddress
import json
import os
import re
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Protocol

import requests
import tldextract

from .errors import AllowlistUnreadable, BackendUnavailable, IndicatorInvalid, RateLimited
from .ratelimit import RateLimiter

DEFAULT_TTL = 7 * 24 * 3600.0
DEFAULT_THRESHOLD = 4


class IndicatorKind(str, Enum):
    FILE_HASH = "file-hash"
    DOMAIN = "domain"
    IP = "ip"
    URL = "url"


class ThreatClass(str, Enum):
    CLEAN = "clean"
    FLAGGED = "flagged"
    MALICIOUS = "malicious"


_HASH_RE = re.compile(r"^[0-9a-f]{64}$")
_LABEL_RE = re.compile(r"^(?!-)[a-z0-9-]{1,63}(?<!-)$")
_URL_RE = re.compile(r"^[a-z][a-z0-9+.-]*://[^\s/?#]+[^\s]*$", re.I)


@dataclass(frozen=True, order=True)
class Indicator:
    kind: IndicatorKind
    value: str


def _valid_domain(host: str) -> bool:
    if not host or len(host) > 253:
        return False
    labels = host.split(".")
    return all(_LABEL_RE.match(lb) for lb in labels) and not labels[-1].isdigit()


def make_indicator(kind: IndicatorKind | str, value: str) -> Indicator:
    """Validate and normalize an indicator."""
    kind = IndicatorKind(kind)
    if not isinstance(value, str):
        raise IndicatorInvalid(f"{kind.value}: value must be a string")
    v = value.strip()
    if kind is IndicatorKind.FILE_HASH:
        v = v.lower()
        if not _HASH_RE.match(v):
            raise IndicatorInvalid(f"file hash must be 64 hex characters: {value!r}")
    elif kind is IndicatorKind.DOMAIN:
        v = v.lower().rstrip(".")
        if not _valid_domain(v):
            raise IndicatorInvalid(f"not a host name: {value!r}")
    elif kind is IndicatorKind.IP:
        try:
            v = str(ipaddress.ip_address(v.strip("[]")))
        except ValueError:
            raise IndicatorInvalid(f"not an IP address: {value!r}") from None
    elif not _URL_RE.match(v):
        raise IndicatorInvalid(f"not a URL: {value!r}")
    return Indicator(kind, v)


@dataclass(frozen=True)
class IntelVerdict:
    indicator: Indicator
    engines_total: int
    engines_positive: int
    fetched_at: float
    backend: str

    def __post_init__(self) -> None:
        if not 0 <= self.engines_positive <= self.engines_total:
            raise ValueError(
                f"engine counts out of order: {self.engines_positive} positive of {self.engines_total}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "indicator": {"kind": self.indicator.kind.value, "value": self.indicator.value},
            "engines_total": self.engines_total,
            "engines_positive": self.engines_positive,
            "fetched_at": self.fetched_at,
            "backend": self.backend,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> IntelVerdict:
        ind = d["indicator"]
        return cls(
            Indicator(IndicatorKind(ind["kind"]), ind["value"]),
            int(d["engines_total"]),
            int(d["engines_positive"]),
            float(d["fetched_at"]),
            str(d["backend"]),
        )


def classify(verdict: IntelVerdict, threshold: int = DEFAULT_THRESHOLD) -> ThreatClass:
    if threshold < 1:
        raise ValueError("threshold must be at least 1")
    if verdict.engines_positive == 0:
        return ThreatClass.CLEAN
    if verdict.engines_positive >= threshold:
        return ThreatClass.MALICIOUS
    return ThreatClass.FLAGGED


# --------------------------------------------------------------------------
# backends


class Backend(Protocol):
    name: str

    def query(self, indicator: Indicator, now: float) -> IntelVerdict: ...


class FixtureBackend:
    """Offline table of (total, positive) engine counts.

    File format (JSON)::

        {"indicators": [{"kind": "file-hash", "value": "<sha256>", "engines_total": 70, "engines_positive": 5}]}
    """

    name = "fixture"

    def __init__(self, table: dict[Indicator, tuple[int, int]] | None = None):
        self.table = dict(table or {})
        self.calls = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> FixtureBackend:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        table = {}
        for row in data.get("indicators", []):
            ind = make_indicator(row["kind"], row["value"])
            table[ind] = (int(row["engines_total"]), int(row["engines_positive"]))
        return cls(table)

    def query(self, indicator: Indicator, now: float) -> IntelVerdict:
        with self._lock:
            self.calls += 1
        hit = self.table.get(indicator)
        if hit is None:
            return IntelVerdict(indicator, 0, 0, now, "fixture-miss")
        return IntelVerdict(indicator, hit[0], hit[1], now, self.name)


def _dig(data: Any, path: str) -> Any:
    for part in path.split("."):
        if isinstance(data, dict):
            data = data.get(part)
        elif isinstance(data, list) and part.isdigit() and int(part) < len(data):
            data = data[int(part)]
        else:
            return None
    return data


class HttpJsonBackend:
    """Generic JSON-over-HTTP backend.

    ``url_template`` gets ``{kind}`` and ``{value}``; the API key is read from
    the environment variable ``auth_env`` and sent in ``auth_header``. The
    engine counts are taken from dotted paths into the response body.
    """

    def __init__(
        self,
        url_template: str,
        auth_env: str | None = None,
        auth_header: str = "x-apikey",
        total_path: str = "engines_total",
        positive_path: str = "engines_positive",
        name: str = "http",
        timeout: float = 30.0,
        session: requests.Session | None = None,
    ):
        self.url_template = url_template
        self.auth_env = auth_env
        self.auth_header = auth_header
        self.total_path = total_path
        self.positive_path = positive_path
        self.name = name
        self.timeout = timeout
        self.session = session or requests.Session()
        self.calls = 0

    def query(self, indicator: Indicator, now: float) -> IntelVerdict:
        self.calls += 1
        url = self.url_template.format(kind=indicator.kind.value, value=indicator.value)
        headers = {}
        if self.auth_env:
            key = os.environ.get(self.auth_env)
            if key:
                headers[self.auth_header] = key
        try:
            resp = self.session.get(url, headers=headers, timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendUnavailable(f"{self.name}: {exc}") from None
        if resp.status_code == 404:
            return IntelVerdict(indicator, 0, 0, now, f"{self.name}-miss")
        if resp.status_code == 429:
            retry = resp.headers.get("Retry-After", "")
            raise RateLimited(f"{self.name}: rate limited", float(retry) if retry.replace(".", "", 1).isdigit() else 60.0)
        if resp.status_code >= 500:
            raise BackendUnavailable(f"{self.name}: HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendUnavailable(f"{self.name}: HTTP {resp.status_code} for {indicator.value}")
        try:
            body = resp.json()
            total = int(_dig(body, self.total_path) or 0)
            positive = int(_dig(body, self.positive_path) or 0)
        except (ValueError, TypeError) as exc:
            raise BackendUnavailable(f"{self.name}: malformed response: {exc}") from None
        return IntelVerdict(indicator, max(total, positive), positive, now, self.name)


# --------------------------------------------------------------------------
# client


class IntelClient:
    def __init__(
        self,
        backend: Backend,
        cache_dir: str | Path | None = None,
        ttl: float = DEFAULT_TTL,
        limiter: RateLimiter | None = None,
        max_retries: int = 3,
        backoff: float = 1.0,
        clock: Callable[[], float] = time.time,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.backend = backend
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.ttl = ttl
        self.limiter = limiter
        self.max_retries = max_retries
        self.backoff = backoff
        self.clock = clock
        self.sleep = sleep
        self._memory: dict[Indicator, IntelVerdict] = {}
        self._locks: dict[Indicator, threading.Lock] = {}
        self._guard = threading.Lock()
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)

    def _cache_file(self, ind: Indicator) -> Path:
        digest = hashlib.sha256(f"{ind.kind.value}:{ind.value}".encode()).hexdigest()
        return self.cache_dir / f"{digest}.json"  # type: ignore[operator]

    def _fresh(self, v: IntelVerdict | None) -> bool:
        return v is not None and self.clock() - v.fetched_at < self.ttl

    def _cached(self, ind: Indicator) -> IntelVerdict | None:
        v = self._memory.get(ind)
        if self._fresh(v):
            return v
        if self.cache_dir:
            path = self._cache_file(ind)
            try:
                v = IntelVerdict.from_dict(json.loads(path.read_text(encoding="utf-8")))
            except (OSError, ValueError, KeyError):
                return None
            if v.indicator == ind and self._fresh(v):
                self._memory[ind] = v
                return v
        return None

    def _store(self, v: IntelVerdict) -> None:
        self._memory[v.indicator] = v
        if self.cache_dir:
            path = self._cache_file(v.indicator)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(v.to_dict(), sort_keys=True), encoding="utf-8")
            os.replace(tmp, path)

    def lookup(self, indicator: Indicator | tuple[str, str]) -> IntelVerdict:
        ind = indicator if isinstance(indicator, Indicator) else make_indicator(*indicator)
        with self._guard:
            lock = self._locks.setdefault(ind, threading.Lock())
        # One in-flight backend request per indicator; later callers read the cache.
        with lock:
            hit = self._cached(ind)
            if hit is not None:
                return hit
            v = self._query_with_retry(ind)
            self._store(v)
            return v

    def _query_with_retry(self, ind: Indicator) -> IntelVerdict:
        attempts = 0
        delay = self.backoff
        while True:
            attempts += 1
            if self.limiter is not None:
                self.limiter.acquire()
            try:
                return self.backend.query(ind, self.clock())
            except RateLimited as exc:
                if attempts > self.max_retries:
                    raise BackendUnavailable(f"still rate limited after {attempts} attempts", attempts, exc.retry_after)
                self.sleep(exc.retry_after)
            except BackendUnavailable as exc:
                if attempts > self.max_retries:
                    raise BackendUnavailable(str(exc), attempts, delay) from None
                self.sleep(delay)
                delay *= 2

    def lookup_many(self, indicators: Iterable[Indicator]) -> list[IntelVerdict]:
        return [self.lookup(i) for i in indicators]


# --------------------------------------------------------------------------
# network indicator filtering

_EXTRACT = tldextract.TLDExtract(suffix_list_urls=(), cache_dir=None)


def registrable_domain(host: str) -> str:
    host = host.strip().lower().rstrip(".")
    parts = _EXTRACT(host)
    reg = parts.top_domain_under_public_suffix
    if reg:
        return reg
    # Unknown suffix (e.g. ".test"): last two labels.
    labels = [lb for lb in host.split(".") if lb]
    return ".".join(labels[-2:])


def load_allowlist(path: str | Path) -> frozenset[str]:
    """One domain per line; blank lines, ``#`` comments and a ``domain`` header are ignored."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise AllowlistUnreadable(f"cannot read allowlist {path}: {exc}") from None
    out = set()
    for line in text.splitlines():
        entry = line.split("#", 1)[0].strip().split(",")[-1].strip().lower()
        if entry and entry != "domain":
            out.add(registrable_domain(entry))
    return frozenset(out)


def is_local_host(host: str) -> bool:
    h = host.strip().lower().rstrip(".").strip("[]")
    if h == "localhost" or h.endswith(".localhost"):
        return True
    try:
        ip = ipaddress.ip_address(h)
    except ValueError:
        return False
    return ip.is_private or ip.is_loopback or ip.is_link_local or ip.is_unspecified or ip.is_reserved


def filter_indicators(domains: Iterable[str], allowlist: Iterable[str]) -> list[str]:
    """Hosts worth looking up: not local, not allowlisted. Order kept, duplicates dropped."""
    allowed = {registrable_domain(a) for a in allowlist}
    out: list[str] = []
    seen: set[str] = set()
    for d in domains:
        host = d.strip().lower().rstrip(".")
        if not host or host in seen or is_local_host(host):
            continue
        seen.add(host)
        try:
            ipaddress.ip_address(host.strip("[]"))
            out.append(host)
            continue
        except ValueError:
            pass
        if registrable_domain(host) in allowed:
            continue
        out.append(host)
    return out
