"""Local vulnerability database in JSON Lines.

Line 1 is a header, every later non-blank line is one record::

    {"format": "vsixaudit-vulndb", "version": 1, "source": "fixture 2024-01"}
    {"cve_id": "CVE-2021-3749", "package": "axios", "affected_range": "<0.21.2",
     "severity": "high", "summary": "ReDoS in trim"}

Lines starting with ``#`` are comments. :func:`osv_to_records` converts OSV
advisories (as published for the npm ecosystem) into records.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from ..errors import DbUnparseable, DuplicateRecord, RangeUnparseable
from .semver import Range, parse_range

FORMAT = "vsixaudit-vulndb"
FORMAT_VERSION = 1
SEVERITIES = ("low", "medium", "high", "critical")

# "CVE-FIX-" ids name synthetic fixture records.
CVE_RE = re.compile(r"^CVE-(?:\d{4}|FIX)-\d{4,}$")


@dataclass(frozen=True)
class VulnerabilityRecord:
    cve_id: str
    package: str
    affected_range: str
    severity: str
    summary: str = ""

    def __post_init__(self) -> None:
        if not CVE_RE.match(self.cve_id):
            raise ValueError(f"malformed CVE id {self.cve_id!r}")
        if self.severity not in SEVERITIES:
            raise ValueError(f"{self.cve_id}: unknown severity {self.severity!r}")
        if not self.package:
            raise ValueError(f"{self.cve_id}: empty package name")
        parse_range(self.affected_range)

    @property
    def range(self) -> Range:
        return parse_range(self.affected_range)

    def to_dict(self) -> dict[str, str]:
        return {
            "cve_id": self.cve_id,
            "package": self.package,
            "affected_range": self.affected_range,
            "severity": self.severity,
            "summary": self.summary,
        }


@dataclass(frozen=True)
class VulnDatabase:
    records: tuple[VulnerabilityRecord, ...] = ()
    source_stamp: str = ""
    index: dict[str, tuple[VulnerabilityRecord, ...]] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        seen: set[tuple[str, str]] = set()
        index: dict[str, list[VulnerabilityRecord]] = {}
        for r in self.records:
            key = (r.cve_id, r.package)
            if key in seen:
                raise DuplicateRecord(r.cve_id, r.package)
            seen.add(key)
            index.setdefault(r.package, []).append(r)
        object.__setattr__(self, "index", {k: tuple(v) for k, v in index.items()})

    def for_package(self, name: str) -> tuple[VulnerabilityRecord, ...]:
        return self.index.get(name, ())

    def with_record(self, record: VulnerabilityRecord) -> VulnDatabase:
        return VulnDatabase(self.records + (record,), self.source_stamp)


EMPTY_DB = VulnDatabase()


def parse_vuln_db(text: str, origin: str = "<text>") -> VulnDatabase:
    lines = [(i, ln.strip()) for i, ln in enumerate(text.splitlines(), 1)]
    lines = [(i, ln) for i, ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise DbUnparseable(f"{origin}: empty database (missing header)")
    try:
        header = json.loads(lines[0][1])
    except json.JSONDecodeError as exc:
        raise DbUnparseable(f"{origin}:{lines[0][0]}: header is not JSON: {exc}") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT:
        raise DbUnparseable(f"{origin}: first line must be a {FORMAT} header")
    if header.get("version") != FORMAT_VERSION:
        raise DbUnparseable(f"{origin}: unsupported format version {header.get('version')!r}")

    records = []
    for lineno, line in lines[1:]:
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DbUnparseable(f"{origin}:{lineno}: {exc}") from None
        if not isinstance(raw, dict):
            raise DbUnparseable(f"{origin}:{lineno}: record must be an object")
        try:
            records.append(
                VulnerabilityRecord(
                    cve_id=str(raw["cve_id"]),
                    package=str(raw["package"]),
                    affected_range=str(raw["affected_range"]),
                    severity=str(raw["severity"]).lower(),
                    summary=str(raw.get("summary", "")),
                )
            )
        except KeyError as exc:
            raise DbUnparseable(f"{origin}:{lineno}: missing field {exc}") from None
        except (ValueError, RangeUnparseable) as exc:
            raise DbUnparseable(f"{origin}:{lineno}: {exc}") from None
    return VulnDatabase(tuple(records), str(header.get("source", "")))


def load_vuln_db(path: str | Path) -> VulnDatabase:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DbUnparseable(f"cannot read {path}: {exc}") from None
    return parse_vuln_db(text, str(path))


def dump_vuln_db(db: VulnDatabase) -> str:
    header = {"format": FORMAT, "version": FORMAT_VERSION, "source": db.source_stamp}
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(json.dumps(r.to_dict(), sort_keys=True) for r in db.records)
    return "\n".join(lines) + "\n"


def bundled_db_path() -> Path:
    return Path(__file__).resolve().parent.parent / "data" / "fixture-vulndb.jsonl"


# --------------------------------------------------------------------------
# OSV ingestion


def _osv_severity(advisory: dict[str, Any]) -> str:
    label = str((advisory.get("database_specific") or {}).get("severity", "")).lower()
    return {"moderate": "medium"}.get(label, label) if label in ("low", "moderate", "medium", "high", "critical") else "medium"


def _osv_ranges(affected: dict[str, Any]) -> list[str]:
    out = []
    for rng in affected.get("ranges") or []:
        if rng.get("type") not in ("SEMVER", "ECOSYSTEM"):
            continue
        lo: str | None = None
        for ev in rng.get("events") or []:
            if "introduced" in ev:
                lo = ev["introduced"]
            elif lo is not None and ("fixed" in ev or "last_affected" in ev):
                op, v = ("<", ev["fixed"]) if "fixed" in ev else ("<=", ev["last_affected"])
                out.append(f"{op}{v}" if lo in ("0", "0.0.0") else f">={lo} {op}{v}")
                lo = None
        if lo is not None:
            out.append("*" if lo in ("0", "0.0.0") else f">={lo}")
    return out


def osv_to_records(advisories: Iterable[dict[str, Any]]) -> list[VulnerabilityRecord]:
    """Convert OSV advisories for npm packages; entries without a CVE alias are skipped."""
    records = []
    seen: set[tuple[str, str]] = set()
    for adv in advisories:
        ids = [adv.get("id", "")] + list(adv.get("aliases") or [])
        cve = next((i for i in ids if isinstance(i, str) and CVE_RE.match(i)), None)
        if cve is None:
            continue
        for affected in adv.get("affected") or []:
            pkg = affected.get("package") or {}
            if pkg.get("ecosystem") != "npm" or not pkg.get("name"):
                continue
            ranges = _osv_ranges(affected)
            if not ranges or (cve, pkg["name"]) in seen:
                continue
            seen.add((cve, pkg["name"]))
            records.append(
                VulnerabilityRecord(
                    cve, pkg["name"], " || ".join(ranges), _osv_severity(adv), str(adv.get("summary", ""))
                )
            )
    return records
