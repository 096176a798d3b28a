from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vsixaudit.manifest import analyze_inventory, analyze_manifest
from vsixaudit.model import ExtensionIdentity
from vsixaudit.package import (
    EntryKind,
    ExtensionManifest,
    InventoryEntry,
    PackageInventory,
    WorkspaceTrust,
    parse_manifest,
    read_package,
)
from vsixaudit.policy import DEFAULT_NETWORK_WATCHLIST, SizePolicy

from _synth import MiB, base_manifest, pack_demo_vsix, make_vsix

WHO = ExtensionIdentity("p", "n", "1.0.0")


def _rules(findings) -> list[str]:
    return [f.rule_id for f in findings]


def test_pack_demo_findings() -> None:
    m = read_package(pack_demo_vsix()).manifest
    assert sorted(_rules(analyze_manifest(m))) == [
        "MAN-DEP-INSTALL",
        "MAN-NET-DEP",
        "MAN-PACK-INSTALL",
        "MAN-UNTRUSTED-WS",
    ]


def test_pack_demo_net_dep_names_axios() -> None:
    m = read_package(pack_demo_vsix()).manifest
    [net] = [f for f in analyze_manifest(m) if f.rule_id == "MAN-NET-DEP"]
    assert net.metadata["package"] == "axios"
    assert '"axios": "0.0.1"' in net.evidence


def test_empty_manifest_only_lacks_repository() -> None:
    assert _rules(analyze_manifest(ExtensionManifest(WHO))) == ["MAN-NO-REPO"]


def test_limited_workspace_support() -> None:
    m = ExtensionManifest(WHO, repository_url="x", untrusted_workspaces=WorkspaceTrust.LIMITED)
    assert _rules(analyze_manifest(m)) == ["MAN-UNTRUSTED-WS-LIMITED"]


def _random_manifest(rng: random.Random) -> dict:
    m: dict = {"publisher": "gen", "name": f"m{rng.randrange(10**6)}"}
    if rng.random() < 0.5:
        m["extensionPack"] = [f"a.b{i}" for i in range(rng.randint(0, 2))]
    if rng.random() < 0.5:
        m["extensionDependencies"] = [f"c.d{i}" for i in range(rng.randint(0, 2))]
    if rng.random() < 0.6:
        m["capabilities"] = {"untrustedWorkspaces": {"supported": rng.choice([True, False, "true", "limited", 1])}}
    if rng.random() < 0.6:
        m["repository"] = rng.choice([{"url": "https://x"}, "https://y", {"url": ""}, "", {"type": "git"}])
    names = rng.sample(["axios", "got", "lodash", "request", "ws", "chalk", "undici"], rng.randint(0, 4))
    if names or rng.random() < 0.3:
        m["dependencies"] = {n: "^1.0.0" for n in names}
    return m


def _brute_force(raw: dict) -> list[str]:
    # The five manifest predicates, restated directly on the raw JSON.
    out = []
    if raw.get("extensionPack"):
        out.append("MAN-PACK-INSTALL")
    if raw.get("extensionDependencies"):
        out.append("MAN-DEP-INSTALL")
    sup = raw.get("capabilities", {}).get("untrustedWorkspaces", {}).get("supported")
    if sup is True or sup == "true":
        out.append("MAN-UNTRUSTED-WS")
    if sup == "limited":
        out.append("MAN-UNTRUSTED-WS-LIMITED")
    repo = raw.get("repository")
    url = repo.get("url") if isinstance(repo, dict) else repo
    if not url:
        out.append("MAN-NO-REPO")
    out += ["MAN-NET-DEP" for n in raw.get("dependencies", {}) if n in DEFAULT_NETWORK_WATCHLIST]
    return sorted(out)


def test_fifty_generated_manifests_match_predicate_oracle() -> None:
    rng = random.Random(7)
    for _ in range(50):
        raw = _random_manifest(rng)
        m = parse_manifest(json.dumps(raw).encode())
        assert sorted(_rules(analyze_manifest(m))) == _brute_force(raw), raw


_TRIGGERS = {
    "extension_pack": ("x.y",),
    "extension_dependencies": ("z.w",),
    "untrusted_workspaces": WorkspaceTrust.TRUE,
    "repository_url": None,
    "dependencies": {"axios": "1.0.0"},
}


@settings(max_examples=100, deadline=None)
@given(
    base=st.fixed_dictionaries(
        {},
        optional={
            "extension_pack": st.just(("a.b",)),
            "dependencies": st.dictionaries(st.sampled_from(["got", "lodash", "ws"]), st.just("1.0.0"), max_size=2),
            "repository_url": st.sampled_from([None, "https://r"]),
        },
    ),
    add=st.sampled_from(sorted(_TRIGGERS)),
)
def test_manifest_analysis_is_monotone(base: dict, add: str) -> None:
    before = ExtensionManifest(WHO, **base)
    extra = dict(base)
    if add == "dependencies":
        extra["dependencies"] = {**base.get("dependencies", {}), **_TRIGGERS[add]}
    elif add != "repository_url":
        extra[add] = _TRIGGERS[add]
    after = ExtensionManifest(WHO, **extra)
    got_before = {(f.rule_id, f.evidence) for f in analyze_manifest(before)}
    got_after = {(f.rule_id, f.evidence) for f in analyze_manifest(after)}
    assert {r for r, _ in got_before} <= {r for r, _ in got_after}


def test_findings_are_sorted() -> None:
    m = read_package(pack_demo_vsix()).manifest
    fs = analyze_manifest(m)
    assert fs == sorted(fs, key=lambda f: f.sort_key())


# ---------------------------------------------------------------------------
# inventory


def _inv(*entries: tuple[str, int, EntryKind]) -> PackageInventory:
    return PackageInventory(tuple(InventoryEntry(p, s, k, "0" * 64) for p, s, k in entries))


def test_one_exe_is_one_bundled_binary() -> None:
    inv = _inv(("extension/package.json", 10, EntryKind.MANIFEST), ("extension/bin/tool.exe", 100, EntryKind.NATIVE))
    [f] = analyze_inventory(inv, subject=WHO)
    assert f.rule_id == "MAN-BUNDLED-BINARY"
    assert "extension/bin/tool.exe" in f.evidence


def test_manifest_only_inventory_is_quiet() -> None:
    assert analyze_inventory(_inv(("extension/package.json", 10, EntryKind.MANIFEST)), subject=WHO) == []


def test_each_binary_and_archive_reported() -> None:
    inv = _inv(
        ("a.exe", 1, EntryKind.NATIVE), ("b.jar", 1, EntryKind.ARCHIVE), ("c.png", 1, EntryKind.MEDIA)
    )
    assert _rules(analyze_inventory(inv, subject=WHO)) == ["MAN-BUNDLED-BINARY", "MAN-BUNDLED-BINARY"]


@pytest.mark.parametrize("delta,fires", [(0, False), (1, True)])
def test_oversized_boundary_is_strict(delta: int, fires: bool) -> None:
    limits = SizePolicy(max_total=1000, max_modules=10**9)
    inv = _inv(("a", 600, EntryKind.OTHER), ("b", 400 + delta, EntryKind.OTHER))
    assert ("MAN-OVERSIZED" in _rules(analyze_inventory(inv, limits, WHO))) is fires


@pytest.mark.parametrize("delta,fires", [(0, False), (1, True)])
def test_bundled_modules_boundary_is_strict(delta: int, fires: bool) -> None:
    limits = SizePolicy(max_total=10**9, max_modules=500)
    inv = _inv(("node_modules/a/x.js", 300, EntryKind.NODE_MODULE), ("node_modules/b/y.js", 200 + delta, EntryKind.NODE_MODULE))
    assert ("MAN-BUNDLED-MODULES" in _rules(analyze_inventory(inv, limits, WHO))) is fires


def test_default_limits() -> None:
    limits = SizePolicy()
    assert limits.max_total == 100 * MiB
    assert limits.max_modules == 20 * MiB


def test_large_entry_hash_is_truncated() -> None:
    data = make_vsix(base_manifest("p", "big"), {"extension/blob.bin": bytes(64 * MiB + 5)})
    entry = read_package(data).inventory.get("extension/blob.bin")
    assert entry.size == 64 * MiB + 5
    assert entry.hash_truncated
