from __future__ import annotations

import hashlib
import shutil
import subprocess
from pathlib import Path

import pytest

from vsixaudit.errors import EndpointUnavailable, IntegrityMismatch, NotFound, SchemaMismatch
from vsixaudit.marketplace.client import MarketplaceClient, crawl, sort_versions_desc
from vsixaudit.marketplace.fixture import FixtureExtension, FixtureGallery, FixtureServer
from vsixaudit.marketplace.profile import EndpointProfile, fill, get_path, load_profile
from vsixaudit.marketplace.store import PackageStore
from vsixaudit.model import ExtensionIdentity
from vsixaudit.ratelimit import RateLimiter

from _synth import base_manifest, make_gallery_extensions, make_vsix

FIXTURE = load_profile("fixture")


def _client(server: FixtureServer, **kw) -> MarketplaceClient:
    kw.setdefault("sleep", lambda s: None)
    return MarketplaceClient(FIXTURE, server.url, **kw)


def snapshot(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# ---------------------------------------------------------------------------
# profiles


def test_get_path_forms() -> None:
    doc = {"a": [{"k": "x", "v": 1}, {"k": "install", "v": 9}], "b": {"c": [10, 20]}}
    assert get_path(doc, "a[k=install].v") == 9
    assert get_path(doc, "a[*].k") == ["x", "install"]
    assert get_path(doc, "b.c.1") == 20
    assert get_path(doc, "b.missing.x") is None
    assert get_path(doc, "") is None


def test_fill_keeps_types_for_whole_placeholders() -> None:
    t = {"page": "{page}", "url": "{base}/p/{page}", "list": ["{name}", 3]}
    assert fill(t, {"page": 2, "base": "http://h", "name": None}) == {"page": 2, "url": "http://h/p/2", "list": [None, 3]}


def test_bundled_gallery_profile_parses_gallery_shape() -> None:
    profile = load_profile("gallery")
    raw = {
        "publisher": {"publisherName": "Pub", "isDomainVerified": True},
        "extensionName": "Tool",
        "displayName": "A Tool",
        "statistics": [{"statisticName": "rating", "value": 4.5}, {"statisticName": "install", "value": 1234.0}],
        "lastUpdated": "2024-03-01T00:00:00Z",
        "versions": [{"version": "1.0.0"}, {"version": "1.2.0"}],
    }
    lst = MarketplaceClient(profile, "https://gallery.test")._listing(raw)
    assert str(lst.identity) == "pub.tool@1.2.0"
    assert lst.install_count == 1234 and lst.publisher_verified
    assert lst.listing_url == "https://gallery.test/items?itemName=Pub.Tool"
    body = profile.query.render({"base": "https://g", "page": 3, "page_size": 50})["json"]
    assert body["filters"][0]["pageNumber"] == 3 and body["filters"][0]["pageSize"] == 50


def test_profile_requires_core_fields() -> None:
    with pytest.raises(ValueError):
        EndpointProfile.from_dict({"name": "x", "query": {"url": "u"}, "results_path": "r", "fields": {"name": "n"}, "download_url": "d"})


class _Resp:
    def __init__(self, code: int, body=None, content: bytes = b""):
        self.status_code = code
        self._body = body
        self.content = content

    def json(self):
        if self._body is None:
            raise ValueError("no json")
        return self._body


class _Session:
    def __init__(self, *responses: _Resp):
        self.responses = list(responses)

    def request(self, method: str, url: str, **kw) -> _Resp:
        return self.responses.pop(0)


def test_schema_mismatch_on_missing_fields() -> None:
    client = MarketplaceClient(FIXTURE, "http://x", session=_Session(_Resp(200, {"results": [{"name": "n"}]})))
    with pytest.raises(SchemaMismatch):
        client.query_listings()


def test_schema_mismatch_on_non_json() -> None:
    client = MarketplaceClient(FIXTURE, "http://x", session=_Session(_Resp(200)))
    with pytest.raises(SchemaMismatch):
        client.query_listings()


def test_retries_then_unavailable() -> None:
    slept: list[float] = []
    client = MarketplaceClient(FIXTURE, "http://x", session=_Session(*[_Resp(503)] * 4), sleep=slept.append, backoff=0.5)
    with pytest.raises(EndpointUnavailable):
        client.query_listings()
    assert slept == [0.5, 1.0, 2.0]


# ---------------------------------------------------------------------------
# listings


def test_pagination_sizes() -> None:
    gallery = FixtureGallery(make_gallery_extensions(3))
    with FixtureServer(gallery) as server:
        client = _client(server)
        sizes = [len(client.query_listings(p, 2).items) for p in (1, 2)]
    assert sizes == [2, 1]


def test_updated_since_after_everything_is_empty() -> None:
    gallery = FixtureGallery(make_gallery_extensions(3))
    with FixtureServer(gallery) as server:
        assert _client(server).query_listings(1, 10, "2099-01-01").items == ()


def test_listing_fields() -> None:
    ext = FixtureExtension("Pub", "Ext", {"1.0.0": b"x", "1.1.0": b"y"}, install_count=42, verified=True)
    with FixtureServer(FixtureGallery([ext])) as server:
        [lst] = _client(server).query_listings().items
    assert str(lst.identity) == "pub.ext@1.1.0"
    assert lst.versions == ("1.1.0", "1.0.0")
    assert lst.install_count == 42 and lst.publisher_verified


def test_crawl_of_250_listings_matches_seed(tmp_path: Path) -> None:
    exts = make_gallery_extensions(250, seed=1)
    with FixtureServer(FixtureGallery(exts)) as server:
        stats = crawl(_client(server), PackageStore(tmp_path), page_size=40, workers=4)
    assert stats.listed == 250 and stats.downloaded == 250 and not stats.failed
    ledger = PackageStore(tmp_path).entries()
    assert {(e.id, e.version) for e in ledger} == {(x.id, "1.0.0") for x in exts}
    assert {e.id: e.install_count for e in ledger} == {x.id: x.install_count for x in exts}


# ---------------------------------------------------------------------------
# downloads and store


def test_download_hash_matches_external_tool(tmp_path: Path) -> None:
    exts = make_gallery_extensions(1)
    store = PackageStore(tmp_path)
    with FixtureServer(FixtureGallery(exts)) as server:
        res = _client(server).download(ExtensionIdentity("pub0", "ext0000", "1.0.0"), store)
    path = store.path_for(res.sha256)
    if shutil.which("sha256sum"):
        external = subprocess.run(["sha256sum", str(path)], capture_output=True, text=True, check=True).stdout.split()[0]
    else:
        external = hashlib.sha256(path.read_bytes()).hexdigest()
    assert external == res.sha256
    assert path == tmp_path / "store" / res.sha256[:2] / f"{res.sha256}.vsix"


def test_repeat_download_is_cache_hit(tmp_path: Path) -> None:
    store = PackageStore(tmp_path)
    ident = ExtensionIdentity("pub0", "ext0000", "1.0.0")
    with FixtureServer(FixtureGallery(make_gallery_extensions(1))) as server:
        client = _client(server)
        first = client.download(ident, store)
        made = client.requests_made
        second = client.download(ident, store)
    assert not first.cache_hit and second.cache_hit
    assert client.requests_made == made
    assert len([p for p in (tmp_path / "store").rglob("*.vsix")]) == 1


def test_missing_package_not_found(tmp_path: Path) -> None:
    with FixtureServer(FixtureGallery([])) as server:
        with pytest.raises(NotFound):
            _client(server).download(ExtensionIdentity("no", "such", "1.0.0"), PackageStore(tmp_path))


def test_expected_hash_mismatch(tmp_path: Path) -> None:
    with FixtureServer(FixtureGallery(make_gallery_extensions(1))) as server:
        with pytest.raises(IntegrityMismatch):
            _client(server).download(ExtensionIdentity("pub0", "ext0000", "1.0.0"), PackageStore(tmp_path), expected_sha256="0" * 64)
    assert not (tmp_path / "ledger.jsonl").exists()


def test_store_rewrites_corrupted_blob(tmp_path: Path) -> None:
    store = PackageStore(tmp_path)
    sha = store.write_blob(b"payload")
    store.path_for(sha).write_bytes(b"tampered")
    assert store.write_blob(b"payload") == sha
    assert store.path_for(sha).read_bytes() == b"payload"


def test_store_never_maps_hash_to_other_bytes(tmp_path: Path) -> None:
    store = PackageStore(tmp_path)
    for blob in [b"a", b"b", b"a", b"c" * 1000, b"b"]:
        store.write_blob(blob)
    for p in (tmp_path / "store").rglob("*.vsix"):
        assert hashlib.sha256(p.read_bytes()).hexdigest() == p.stem


def test_partial_ledger_line_is_repaired(tmp_path: Path) -> None:
    store = PackageStore(tmp_path)
    store.record(ExtensionIdentity("a", "b", "1.0.0"), "0" * 64, 1)
    with open(store.ledger_path, "a") as fh:
        fh.write('{"id": "c.d", "vers')
    again = PackageStore(tmp_path)
    assert [e.id for e in again.entries()] == ["a.b"]


# ---------------------------------------------------------------------------
# versions


def test_fetch_versions_descending() -> None:
    ext = FixtureExtension("p", "e", {"1.0.0": b"x", "1.1.0": b"y"})
    with FixtureServer(FixtureGallery([ext])) as server:
        assert _client(server).fetch_versions(ExtensionIdentity("p", "e", "1.1.0")) == ["1.1.0", "1.0.0"]


def test_single_version() -> None:
    with FixtureServer(FixtureGallery([FixtureExtension("p", "e", {"2.0.0": b"x"})])) as server:
        assert _client(server).fetch_versions(ExtensionIdentity("p", "e", "2.0.0")) == ["2.0.0"]


def test_fetch_versions_unknown() -> None:
    with FixtureServer(FixtureGallery([])) as server:
        with pytest.raises(NotFound):
            _client(server).fetch_versions(ExtensionIdentity("p", "e", "1.0.0"))


def test_prior_version_candidates() -> None:
    exts = make_gallery_extensions(5, multi_version_every=3)  # indices 0 and 3
    with FixtureServer(FixtureGallery(exts)) as server:
        client = _client(server)
        candidates = [lst.identity.id for lst in client.iter_listings() if len(client.fetch_versions(lst.identity)) >= 2]
    assert candidates == ["pub0.ext0000", "pub3.ext0003"]


def test_version_sort_handles_junk() -> None:
    assert sort_versions_desc(["1.0.0", "latest", "1.10.0", "1.2.0", "1.0.0"]) == ["1.10.0", "1.2.0", "1.0.0", "latest"]


# ---------------------------------------------------------------------------
# resumability and politeness


def test_interrupted_crawl_resumes_byte_identical(tmp_path: Path) -> None:
    exts = make_gallery_extensions(30, seed=2)
    with FixtureServer(FixtureGallery(exts)) as server:
        full = tmp_path / "full"
        crawl(_client(server), PackageStore(full), page_size=7, workers=4)

        part = tmp_path / "part"
        first = crawl(_client(server), PackageStore(part), page_size=7, workers=4, limit=11)
        assert first.downloaded == 11
        with open(part / "ledger.jsonl", "a") as fh:
            fh.write('{"id": "half-writ')  # a crash in the middle of an append
        second = crawl(_client(server), PackageStore(part), page_size=7, workers=4)
        assert (second.cache_hits, second.downloaded) == (11, 19)
    assert snapshot(part) == snapshot(full)


def test_transient_server_errors_are_retried(tmp_path: Path) -> None:
    gallery = FixtureGallery(make_gallery_extensions(4))
    gallery.fail_next = 2
    with FixtureServer(gallery) as server:
        stats = crawl(_client(server), PackageStore(tmp_path), workers=1)
    assert stats.downloaded == 4 and not stats.failed


def test_incremental_crawl_completeness(tmp_path: Path) -> None:
    exts = make_gallery_extensions(12, seed=3)
    gallery = FixtureGallery(exts)
    t0 = "2024-03-01T00:00:00Z"
    with FixtureServer(gallery) as server:
        daily = tmp_path / "daily"
        crawl(_client(server), PackageStore(daily))
        # Mutate: two new versions and one new extension, all updated after T0.
        for e in exts[:2]:
            e.packages["2.0.0"] = make_vsix(base_manifest(e.publisher, e.name, "2.0.0"))
            e.updated_at = "2024-03-02T00:00:00Z"
        exts.append(FixtureExtension("late", "comer", {"1.0.0": make_vsix(base_manifest("late", "comer"))}, updated_at="2024-03-05T00:00:00Z"))
        inc = crawl(_client(server), PackageStore(daily), updated_since=t0)
        assert (inc.listed, inc.downloaded) == (3, 3)
        fresh = tmp_path / "fresh"
        crawl(_client(server), PackageStore(fresh))
    daily_ids = {(e.id, e.version) for e in PackageStore(daily).entries()}
    fresh_ids = {(e.id, e.version) for e in PackageStore(fresh).entries()}
    assert fresh_ids <= daily_ids
    assert daily_ids - fresh_ids == {(e.id, "1.0.0") for e in exts[:2]}


class SimClock:
    def __init__(self) -> None:
        self.now = 0.0

    def __call__(self) -> float:
        return self.now

    def sleep(self, dt: float) -> None:
        self.now += max(dt, 0.0)


def test_request_rate_respected_under_simulated_clock(tmp_path: Path) -> None:
    clock = SimClock()
    stamps: list[float] = []
    limiter = RateLimiter.per_second(3, clock=clock, sleep=clock.sleep)

    class Timed(MarketplaceClient):
        def _request(self, method, url, **kw):
            resp = super()._request(method, url, **kw)
            stamps.append(clock())
            return resp

    with FixtureServer(FixtureGallery(make_gallery_extensions(10))) as server:
        client = Timed(FIXTURE, server.url, limiter=limiter, sleep=clock.sleep)
        crawl(client, PackageStore(tmp_path), page_size=4, workers=1)
    assert len(stamps) == 13  # 3 listing pages + 10 downloads
    for i, s in enumerate(stamps):
        assert sum(1 for t in stamps[i:] if t - s < 1.0) <= 3
    assert stamps[-1] >= 4.0
