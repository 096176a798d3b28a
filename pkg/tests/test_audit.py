from __future__ import annotations

import json
from collections import Counter
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vsixaudit.deps.audit import audit
from vsixaudit.deps.vulndb import (
    EMPTY_DB,
    VulnDatabase,
    VulnerabilityRecord,
    bundled_db_path,
    dump_vuln_db,
    load_vuln_db,
    osv_to_records,
    parse_vuln_db,
)
from vsixaudit.errors import DbUnparseable, DuplicateRecord
from vsixaudit.model import ExtensionIdentity, Severity
from vsixaudit.package import ExtensionManifest, PackageInventory, read_package

from _synth import HISTOGRAM, histogram_corpus, histogram_db_text, pack_demo_vsix

WHO = ExtensionIdentity("p", "n", "1.0.0")
AXIOS = VulnerabilityRecord("CVE-FIX-0001", "axios", "<0.21.1", "high", "fixture")


def _manifest(deps: dict[str, str]) -> ExtensionManifest:
    return ExtensionManifest(WHO, dependencies=deps)


def test_axios_listing_dependency_matches() -> None:
    [f] = audit(_manifest({"axios": "0.0.1"}), PackageInventory(), VulnDatabase((AXIOS,)))
    assert f.rule_id == "DEP-CVE" and f.severity is Severity.HIGH
    assert f.metadata["cve_id"] == "CVE-FIX-0001"


def test_pack_demo_against_bundled_db() -> None:
    pkg = read_package(pack_demo_vsix())
    findings = audit(pkg.manifest, pkg.inventory, load_vuln_db(bundled_db_path()))
    assert sorted(f.metadata["cve_id"] for f in findings) == ["CVE-FIX-0001", "CVE-FIX-0005"]


def test_empty_everything() -> None:
    assert audit(_manifest({}), PackageInventory(), EMPTY_DB) == []


def test_fixed_range_does_not_match() -> None:
    assert audit(_manifest({"axios": "^0.21.1"}), PackageInventory(), VulnDatabase((AXIOS,))) == []


def test_declared_range_matches_by_intersection() -> None:
    [f] = audit(_manifest({"axios": "^0.21.0"}), PackageInventory(), VulnDatabase((AXIOS,)))
    assert f.metadata["source"] == "manifest"


def test_unparseable_declared_range() -> None:
    [f] = audit(_manifest({"axios": "github:axios/axios"}), PackageInventory(), VulnDatabase((AXIOS,)))
    assert f.rule_id == "DEP-RANGE-UNPARSEABLE" and f.severity is Severity.INFO


def test_histogram_fixture_reproduces_split() -> None:
    db = parse_vuln_db(histogram_db_text())
    assert Counter(r.severity for r in db.records) == Counter(HISTOGRAM)
    found = []
    for data in histogram_corpus():
        pkg = read_package(data)
        found += audit(pkg.manifest, pkg.inventory, db)
    assert all(f.rule_id == "DEP-CVE" for f in found)
    assert len({f.metadata["cve_id"] for f in found}) == 54
    assert Counter(f.severity.value for f in found) == Counter(HISTOGRAM)
    assert Counter(f.metadata["source"] for f in found) == {"manifest": 27, "bundled": 27}


def test_evidence_names_package_declared_and_range() -> None:
    [f] = audit(_manifest({"axios": "0.0.1"}), PackageInventory(), VulnDatabase((AXIOS,)))
    for part in ("axios", "0.0.1", "<0.21.1"):
        assert part in f.evidence


_RECORDS = st.builds(
    VulnerabilityRecord,
    cve_id=st.integers(1000, 1030).map(lambda i: f"CVE-FIX-{i}"),
    package=st.sampled_from(["axios", "lodash", "ws"]),
    affected_range=st.sampled_from(["<1.0.0", ">=2.0.0", "1.x", "^0.5.0", "*"]),
    severity=st.sampled_from(["low", "medium", "high", "critical"]),
)


def _unique(records: list[VulnerabilityRecord]) -> tuple[VulnerabilityRecord, ...]:
    seen, out = set(), []
    for r in records:
        if (r.cve_id, r.package) not in seen:
            seen.add((r.cve_id, r.package))
            out.append(r)
    return tuple(out)


@settings(max_examples=100, deadline=None)
@given(st.lists(_RECORDS, max_size=8), _RECORDS, st.sampled_from(["0.5.3", "^1.2.0", "~2.1.0", "*"]))
def test_audit_is_monotone_in_database(records: list, extra: VulnerabilityRecord, spec: str) -> None:
    base = VulnDatabase(_unique(records))
    if (extra.cve_id, extra.package) in {(r.cve_id, r.package) for r in base.records}:
        return
    m = _manifest({"axios": spec, "lodash": spec, "ws": spec})
    before = {(f.rule_id, f.evidence) for f in audit(m, PackageInventory(), base)}
    after = {(f.rule_id, f.evidence) for f in audit(m, PackageInventory(), base.with_record(extra))}
    assert before <= after


# ---------------------------------------------------------------------------
# database file


def _write(tmp_path: Path, *records: dict, header: dict | None = None) -> Path:
    header = header or {"format": "vsixaudit-vulndb", "version": 1, "source": "t"}
    p = tmp_path / "db.jsonl"
    p.write_text("\n".join(json.dumps(x) for x in (header, *records)) + "\n")
    return p


def _rec(cve: str, pkg: str, rng: str = "<1.0.0", sev: str = "medium") -> dict:
    return {"cve_id": cve, "package": pkg, "affected_range": rng, "severity": sev}


def test_three_record_file_indexes_three_packages(tmp_path: Path) -> None:
    db = load_vuln_db(_write(tmp_path, _rec("CVE-2021-0001", "a"), _rec("CVE-2021-0002", "b"), _rec("CVE-2021-0003", "c")))
    assert sorted(db.index) == ["a", "b", "c"]
    assert db.source_stamp == "t"


def test_duplicate_record_named(tmp_path: Path) -> None:
    path = _write(tmp_path, _rec("CVE-2021-0001", "a"), _rec("CVE-2021-0001", "a", "<2.0.0"))
    with pytest.raises(DuplicateRecord, match="CVE-2021-0001"):
        load_vuln_db(path)


def test_same_cve_for_two_packages_is_fine(tmp_path: Path) -> None:
    db = load_vuln_db(_write(tmp_path, _rec("CVE-2021-0001", "a"), _rec("CVE-2021-0001", "b")))
    assert len(db.records) == 2


@pytest.mark.parametrize(
    "record",
    [
        {"cve_id": "CVE-21-1", "package": "a", "affected_range": "<1", "severity": "low"},
        {"cve_id": "CVE-2021-0001", "package": "a", "affected_range": ">>1", "severity": "low"},
        {"cve_id": "CVE-2021-0001", "package": "a", "affected_range": "<1", "severity": "severe"},
        {"cve_id": "CVE-2021-0001", "package": "a", "severity": "low"},
    ],
)
def test_bad_records_rejected(tmp_path: Path, record: dict) -> None:
    with pytest.raises(DbUnparseable):
        load_vuln_db(_write(tmp_path, record))


def test_missing_header_rejected(tmp_path: Path) -> None:
    p = tmp_path / "db.jsonl"
    p.write_text(json.dumps(_rec("CVE-2021-0001", "a")) + "\n")
    with pytest.raises(DbUnparseable):
        load_vuln_db(p)


def test_round_trip(tmp_path: Path) -> None:
    db = load_vuln_db(bundled_db_path())
    p = tmp_path / "again.jsonl"
    p.write_text(dump_vuln_db(db))
    assert load_vuln_db(p) == db
    assert dump_vuln_db(load_vuln_db(p)) == dump_vuln_db(db)


def test_bundled_fixture_content() -> None:
    db = load_vuln_db(bundled_db_path())
    assert len(db.records) == 6
    assert db.for_package("axios")[0].affected_range == "<0.21.1"


def test_osv_conversion() -> None:
    advisory = {
        "id": "GHSA-xxxx",
        "aliases": ["CVE-2020-28168"],
        "summary": "SSRF",
        "database_specific": {"severity": "MODERATE"},
        "affected": [
            {
                "package": {"ecosystem": "npm", "name": "axios"},
                "ranges": [{"type": "SEMVER", "events": [{"introduced": "0"}, {"fixed": "0.21.1"}]}],
            },
            {"package": {"ecosystem": "PyPI", "name": "axios"}, "ranges": []},
        ],
    }
    no_cve = {"id": "GHSA-yyyy", "affected": advisory["affected"]}
    [rec] = osv_to_records([advisory, no_cve])
    assert (rec.cve_id, rec.package, rec.affected_range, rec.severity) == ("CVE-2020-28168", "axios", "<0.21.1", "medium")
