from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from vsixaudit.cli import main, parse_indicator
from vsixaudit.errors import PolicyError
from vsixaudit.graph import EDGE_HEADER
from vsixaudit.intel import IndicatorKind
from vsixaudit.marketplace.fixture import FixtureGallery, FixtureServer
from vsixaudit.policy import DEFAULT_POLICY, parse_policy
from vsixaudit.report import parse

from _synth import SOURCE_SEEDS, base_manifest, pack_demo_vsix, make_gallery_extensions, make_vsix


def _write(tmp_path: Path, name: str, data: bytes) -> Path:
    p = tmp_path / name
    p.write_bytes(data)
    return p


def _clean(tmp_path: Path, name: str = "clean") -> Path:
    return _write(tmp_path, f"{name}.vsix", make_vsix(base_manifest("p", name)))


def test_clean_package_exits_zero(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    assert main(["scan", str(_clean(tmp_path))]) == 0
    assert "p.clean@1.0.0  risk 0/100 (benign)" in capsys.readouterr().out


def test_pack_demo_is_suspicious(tmp_path: Path) -> None:
    out = tmp_path / "r.json"
    code = main(["scan", str(_write(tmp_path, "demo.vsix", pack_demo_vsix())), "--format", "structured", "--out", str(out)])
    report = parse(out.read_bytes())
    assert code == report.risk.tier.exit_code == 1  # three medium plus one info: 46
    assert {f.rule_id for f in report.findings} == {"MAN-PACK-INSTALL", "MAN-DEP-INSTALL", "MAN-UNTRUSTED-WS", "MAN-NET-DEP"}


def test_high_risk_exit_two(tmp_path: Path) -> None:
    p = _write(tmp_path, "tls.vsix", make_vsix(base_manifest("p", "tls"), {"extension/out/a.js": SOURCE_SEEDS["SRC-TLS-DISABLE"][0]}))
    assert main(["scan", str(p)]) == 2


def test_bundled_vuln_db_adds_cves(tmp_path: Path) -> None:
    out = tmp_path / "r.json"
    main(["scan", str(_write(tmp_path, "demo.vsix", pack_demo_vsix())), "--vuln-db", "bundled", "--format", "structured", "--out", str(out)])
    report = parse(out.read_bytes())
    assert sorted(f.metadata["cve_id"] for f in report.dep_findings) == ["CVE-FIX-0001", "CVE-FIX-0005"]


def test_several_packages_give_corpus_report(tmp_path: Path) -> None:
    out = tmp_path / "r.json"
    code = main(["scan", str(_clean(tmp_path, "a")), str(_clean(tmp_path, "b")), "--format", "structured", "--out", str(out)])
    doc = json.loads(out.read_text())
    assert code == 0 and doc["kind"] == "corpus-report" and len(doc["extensions"]) == 2


def test_unreadable_package_is_operational_error(tmp_path: Path) -> None:
    bad = _write(tmp_path, "bad.vsix", b"not a zip")
    assert main(["scan", str(_clean(tmp_path)), str(bad)]) == 3


def test_missing_file_is_operational_error(tmp_path: Path) -> None:
    assert main(["scan", str(tmp_path / "nope.vsix")]) == 3


def test_bad_policy_is_operational_error(tmp_path: Path) -> None:
    pol = tmp_path / "p.ini"
    pol.write_text("[severity]\nSRC-NOPE = high\n")
    assert main(["scan", str(_clean(tmp_path)), "--policy", str(pol)]) == 3


def test_policy_changes_tier(tmp_path: Path) -> None:
    pol = tmp_path / "p.ini"
    pol.write_text("[tiers]\nsuspicious = 1\nhigh_risk = 2\n")
    p = _write(tmp_path, "nr.vsix", make_vsix({"publisher": "p", "name": "nr", "version": "1.0.0"}))
    assert main(["scan", str(p)]) == 0  # MAN-NO-REPO weighs 5
    assert main(["scan", str(p), "--policy", str(pol)]) == 2


def test_table_format(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    main(["scan", str(_write(tmp_path, "demo.vsix", pack_demo_vsix())), "--format", "table"])
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "extension,version,rule_id,category,severity,location,evidence"
    assert len(lines) == 5


def test_corpus_command_on_directory(tmp_path: Path) -> None:
    for i in range(3):
        _clean(tmp_path, f"c{i}")
    _write(tmp_path, "demo.vsix", pack_demo_vsix())
    out = tmp_path / "out.json"
    code = main(["corpus", str(tmp_path), "--workers", "2", "--format", "structured", "--out", str(out)])
    report = parse(out.read_bytes())
    assert code == 1 and len(report.extensions) == 4
    assert report.install_graph["installer_counts"] == 1


def test_corpus_on_missing_dir(tmp_path: Path) -> None:
    assert main(["corpus", str(tmp_path / "absent")]) == 3


def test_corpus_with_intel_fixture(tmp_path: Path) -> None:
    store = tmp_path / "pkgs"
    store.mkdir()
    src = "const u = 'https://drop.evil.test/x'; const v = 'https://api.github.com/';\n"
    _write(store, "beacon.vsix", make_vsix(base_manifest("p", "beacon"), {"extension/out/a.js": src}))
    fixture = tmp_path / "intel.json"
    fixture.write_text(json.dumps({"indicators": [{"kind": "domain", "value": "drop.evil.test", "engines_total": 90, "engines_positive": 4}]}))
    allow = tmp_path / "allow.txt"
    allow.write_text("github.com\n")
    out = tmp_path / "r.json"
    code = main(["corpus", str(store), "--intel-fixture", str(fixture), "--allowlist", str(allow), "--format", "structured", "--out", str(out)])
    [r] = parse(out.read_bytes()).extensions
    assert code == 2
    assert r.intel["domain:drop.evil.test"] == "malicious"
    assert not any("github" in k for k in r.intel)


def test_crawl_then_corpus(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    store = tmp_path / "store"
    with FixtureServer(FixtureGallery(make_gallery_extensions(5))) as server:
        code = main(["crawl", "--endpoint-profile", "fixture", "--base-url", server.url, "--out-store", str(store), "--rate", "100", "--format", "structured"])
    doc = json.loads(capsys.readouterr().out)
    assert code == 0 and doc["downloaded"] == 5
    out = tmp_path / "r.json"
    main(["corpus", str(store), "--format", "structured", "--out", str(out)])
    report = parse(out.read_bytes())
    assert sorted(r.install_count for r in report.extensions) == sorted(e.install_count for e in make_gallery_extensions(5))


def test_crawl_unreachable_is_operational(tmp_path: Path) -> None:
    code = main(["crawl", "--endpoint-profile", "fixture", "--base-url", "http://127.0.0.1:9", "--out-store", str(tmp_path / "s")])
    assert code == 3


def test_chains_from_edge_file(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    edges = tmp_path / "edges.tsv"
    edges.write_text(f"{EDGE_HEADER}\np.e1\tp.e2\textensionPack\np.e2\tp.e3\textensionDependencies\n")
    assert main(["chains", str(edges), "--format", "structured"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["kind"] == "install-chains" and doc["chains"] == [["p.e1", "p.e2", "p.e3"]]


def test_chains_from_packages(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    for name, target in (("e1", "p.e2"), ("e2", "p.e3")):
        _write(tmp_path, f"{name}.vsix", make_vsix(base_manifest("p", name, extensionPack=[target])))
    _write(tmp_path, "e3.vsix", make_vsix(base_manifest("p", "e3")))
    main(["chains", str(tmp_path)])
    assert capsys.readouterr().out.splitlines()[0] == "p.e1 -> p.e2 -> p.e3"


def test_chains_rejects_other_files(tmp_path: Path) -> None:
    p = tmp_path / "x.txt"
    p.write_text("hello")
    assert main(["chains", str(p)]) == 3


@pytest.mark.parametrize("positives,code", [(0, 0), (3, 1), (4, 2)])
def test_intel_command_exit_codes(tmp_path: Path, positives: int, code: int) -> None:
    fixture = tmp_path / "intel.json"
    fixture.write_text(json.dumps({"indicators": [{"kind": "domain", "value": "sampctl.com", "engines_total": 90, "engines_positive": positives}]}))
    assert main(["intel", "sampctl.com", "--intel-fixture", str(fixture)]) == code


def test_intel_without_backend(tmp_path: Path) -> None:
    assert main(["intel", "sampctl.com"]) == 3


@pytest.mark.parametrize(
    "text,kind",
    [("a" * 64, IndicatorKind.FILE_HASH), ("https://x.test/p", IndicatorKind.URL), ("10.1.2.3", IndicatorKind.IP),
     ("sampctl.com", IndicatorKind.DOMAIN), ("domain:sampctl.com", IndicatorKind.DOMAIN), ("[::1]", IndicatorKind.IP)],
)
def test_indicator_autodetect(text: str, kind: IndicatorKind) -> None:
    assert parse_indicator(text).kind is kind


def test_policy_parsing() -> None:
    p = parse_policy("[network]\nwatchlist = axios, ky\n[intel]\nthreshold = 5\n[scoring]\nlow = 7\n")
    assert p.network_watchlist == ("axios", "ky") and p.intel_threshold == 5
    assert p.weights[next(k for k in p.weights if k.value == "low")] == 7
    assert p.sizes == DEFAULT_POLICY.sizes


@pytest.mark.parametrize("text", ["[intel]\nthreshold = 0\n", "[scoring]\nhuge = 3\n", "[sizes]\nmax_total = lots\n", "not ini"])
def test_policy_errors(text: str) -> None:
    with pytest.raises(PolicyError):
        parse_policy(text)


def test_module_entry_point(tmp_path: Path) -> None:
    proc = subprocess.run([sys.executable, "-m", "vsixaudit", "scan", str(_clean(tmp_path))], capture_output=True, text=True)
    assert proc.returncode == 0 and "benign" in proc.stdout
