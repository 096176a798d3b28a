from __future__ import annotations

import io
import json
import zipfile

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vsixaudit.errors import ManifestMissing, ManifestUnparseable, NotAZip, PathTraversal
from vsixaudit.package import EntryKind, WorkspaceTrust, classify_entry, read_package

from _synth import PACK_DEMO, base_manifest, pack_demo_vsix, make_vsix


def _raw_zip(entries: dict[str, bytes]) -> bytes:
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        for name, data in entries.items():
            zf.writestr(zipfile.ZipInfo(name, (2024, 1, 1, 0, 0, 0)), data)
    return buf.getvalue()


def test_pack_demo_manifest_fields() -> None:
    pkg = read_package(pack_demo_vsix())
    m = pkg.manifest
    assert m.extension_pack == ("chrismarti.regex",)
    assert m.extension_dependencies == ("zobo.php",)
    assert m.untrusted_workspaces is WorkspaceTrust.TRUE
    assert m.dependencies == {"@types/vscode": "0.10.x", "axios": "0.0.1"}
    assert m.repository_url == "https://me.me"
    assert m.main == "./out/extension"


def test_identity_only_manifest_has_empty_collections() -> None:
    pkg = read_package(make_vsix({"publisher": "Pub", "name": "empty", "version": "0.1.0"}))
    m = pkg.manifest
    assert str(pkg.identity) == "pub.empty@0.1.0"
    assert m.dependencies == {} and m.extension_pack == () and m.extension_dependencies == ()
    assert m.untrusted_workspaces is WorkspaceTrust.ABSENT
    assert m.repository_url is None
    assert pkg.findings == ()


def test_inventory_total_matches_independent_listing() -> None:
    files = {f"extension/f{i}.txt": b"x" * (100 * i + 7) for i in range(6)}
    data = make_vsix(base_manifest("p", "seven"), files)
    with zipfile.ZipFile(io.BytesIO(data)) as zf:
        listed = [i for i in zf.infolist() if not i.is_dir()]
        expected_total = sum(i.file_size for i in listed)
    assert len(listed) == 7
    pkg = read_package(data)
    assert len(pkg.inventory.entries) == 7
    assert pkg.inventory.total_size == expected_total


def test_raw_manifest_preserves_unknown_fields() -> None:
    m = dict(base_manifest("p", "raw"), customField={"nested": [1, 2, {"k": "v"}]}, zeta=None)
    pkg = read_package(make_vsix(m))
    assert pkg.manifest.raw == m
    assert json.loads(pkg.manifest.source) == m


def test_reading_twice_is_identical() -> None:
    data = pack_demo_vsix()
    assert read_package(data) == read_package(data)


def test_not_a_zip() -> None:
    with pytest.raises(NotAZip):
        read_package(b"this is not a zip file")


def test_manifest_missing() -> None:
    with pytest.raises(ManifestMissing):
        read_package(_raw_zip({"extension/readme.md": b"hi"}))


@pytest.mark.parametrize("body", [b"{not json", b"[1, 2]", b"\xff\xfe garbage"])
def test_manifest_unparseable(body: bytes) -> None:
    with pytest.raises(ManifestUnparseable):
        read_package(_raw_zip({"extension/package.json": body}))


def test_manifest_without_identity_is_unparseable() -> None:
    with pytest.raises(ManifestUnparseable):
        read_package(make_vsix({"main": "x.js"}))


def test_vsixmanifest_supplies_missing_identity() -> None:
    assert str(read_package(pack_demo_vsix()).identity) == "fixture.pack-demo@1.0.0"


def test_identity_mismatch_is_a_finding() -> None:
    data = make_vsix(base_manifest("pub", "one"), vsixmanifest=("pub", "other", "1.0.0"))
    pkg = read_package(data)
    assert [f.rule_id for f in pkg.findings] == ["PKG-ID-MISMATCH"]
    assert str(pkg.identity) == "pub.one@1.0.0"


def test_fallback_manifest_location() -> None:
    data = _raw_zip({"pkg/package.json": json.dumps(base_manifest("p", "alt")).encode()})
    assert read_package(data).manifest.path == "pkg/package.json"


def test_duplicate_entries_reported() -> None:
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        zf.writestr("extension/package.json", json.dumps(base_manifest("p", "dup")))
        with pytest.warns(UserWarning):
            zf.writestr("extension/a.js", "1")
            zf.writestr("extension/a.js", "2")
    pkg = read_package(buf.getvalue())
    assert [f.rule_id for f in pkg.findings] == ["PKG-DUPLICATE-ENTRY"]
    assert [e.path for e in pkg.inventory.entries].count("extension/a.js") == 1


@pytest.mark.parametrize(
    "name", ["../evil.js", "extension/../../evil", "/etc/passwd", "extension/..\\..\\x", "C:/windows/x"]
)
def test_path_traversal_rejected(name: str) -> None:
    with pytest.raises(PathTraversal):
        read_package(_raw_zip({"extension/package.json": b'{"publisher":"p","name":"n"}', name: b"x"}))


_SEG = st.text(alphabet="abc.", min_size=1, max_size=4).filter(lambda s: s not in (".", ".."))


@settings(max_examples=150, deadline=None)
@given(depth=st.integers(1, 4), prefix=st.lists(_SEG, max_size=3), suffix=st.lists(_SEG, min_size=1, max_size=3))
def test_any_escaping_path_raises(depth: int, prefix: list[str], suffix: list[str]) -> None:
    # prefix/.. x (len(prefix) + depth)/suffix always climbs above the root.
    name = "/".join(prefix + [".."] * (len(prefix) + depth) + suffix)
    with pytest.raises(PathTraversal):
        read_package(_raw_zip({"extension/package.json": b'{"publisher":"p","name":"n"}', name: b"x"}))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.text(alphabet="abcdef", min_size=1, max_size=6), min_size=1, max_size=8, unique=True))
def test_every_entry_inventoried_once(names: list[str]) -> None:
    files = {f"extension/{n}.txt": n.encode() for n in names}
    pkg = read_package(make_vsix(base_manifest("p", "n"), files))
    paths = [e.path for e in pkg.inventory.entries]
    assert sorted(paths) == sorted(list(files) + ["extension/package.json"])
    assert len(paths) == len(set(paths))


# (path, head bytes, expected kind), labeled by hand
LABELED = [
    ("extension/out/extension.js", b"'use strict'", EntryKind.ECMASCRIPT),
    ("extension/dist/main.mjs", b"export", EntryKind.ECMASCRIPT),
    ("extension/dist/main.cjs", b"module", EntryKind.ECMASCRIPT),
    ("extension/package.json", b"{", EntryKind.MANIFEST),
    ("extension/node_modules/axios/index.js", b"module", EntryKind.NODE_MODULE),
    ("extension/node_modules/@scope/pkg/lib/a.js", b"x", EntryKind.NODE_MODULE),
    ("extension/node_modules/axios/package.json", b"{", EntryKind.NODE_MODULE),
    ("extension/node_modules/fsevents/fsevents.node", b"\xcf\xfa\xed\xfe", EntryKind.NATIVE),
    ("extension/bin/tool.exe", b"MZ\x90\x00", EntryKind.NATIVE),
    ("extension/bin/tool.txt", b"MZ\x90\x00", EntryKind.NATIVE),
    ("extension/bin/helper", b"\x7fELF\x02", EntryKind.NATIVE),
    ("extension/lib/native.dll", b"", EntryKind.NATIVE),
    ("extension/jre/lib/rt.jar", b"PK\x03\x04", EntryKind.ARCHIVE),
    ("extension/assets/data.zip", b"PK\x03\x04", EntryKind.ARCHIVE),
    ("extension/assets/bundle.tar.gz", b"\x1f\x8b", EntryKind.ARCHIVE),
    ("extension/images/icon.png", b"\x89PNG\r\n\x1a\n", EntryKind.MEDIA),
    ("extension/fonts/a.woff2", b"wOF2", EntryKind.MEDIA),
    ("extension/images/logo.svg", b"<svg", EntryKind.MEDIA),
    ("extension/README.md", b"# Title", EntryKind.OTHER),
    ("extension/out/extension.js.map", b"{", EntryKind.OTHER),
]


@pytest.mark.parametrize("path,head,kind", LABELED)
def test_classify_entry_labeled_paths(path: str, head: bytes, kind: EntryKind) -> None:
    assert classify_entry(path, head) is kind


def test_bundled_module_versions_read() -> None:
    files = {"extension/node_modules/lodash/package.json": '{"name": "lodash", "version": "4.17.20"}'}
    pkg = read_package(make_vsix(base_manifest("p", "n"), files))
    assert [(m.name, m.version) for m in pkg.inventory.bundled_modules] == [("lodash", "4.17.20")]


def test_listing_fixture_manifest_is_verbatim() -> None:
    pkg = read_package(pack_demo_vsix())
    assert pkg.manifest.raw == PACK_DEMO
