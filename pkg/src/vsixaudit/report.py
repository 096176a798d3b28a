"""Per-extension reports, risk scoring, category rows and corpus summaries.

Structured output is JSON with ``schema_version`` 1. Top-level shapes:

- ``{"kind": "extension-report", ...}`` for one extension,
- ``{"kind": "corpus-report", "extensions": [...], "summary": {...}, "failures": [...]}``,
- ``{"kind": "corpus-summary", ...}``.

Keys are sorted and findings are in canonical order, so equal inputs give
byte-identical output.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Union

from .errors import UnknownRuleId
from .model import RULES, ExtensionIdentity, Finding, Severity, sort_findings
from .policy import DEFAULT_POLICY, Policy

SCHEMA_VERSION = 1


class Tier(str, Enum):
    BENIGN = "benign"
    SUSPICIOUS = "suspicious"
    HIGH_RISK = "high-risk"

    @property
    def exit_code(self) -> int:
        return {Tier.BENIGN: 0, Tier.SUSPICIOUS: 1, Tier.HIGH_RISK: 2}[self]


@dataclass(frozen=True)
class Risk:
    score: int
    tier: Tier


def score(findings: Iterable[Finding], intel: dict[str, str] | None = None, policy: Policy = DEFAULT_POLICY) -> Risk:
    total = min(100, sum(policy.weights[f.severity] for f in findings))
    if intel and any(v == "malicious" for v in intel.values()):
        return Risk(total, Tier.HIGH_RISK)
    if total >= policy.high_risk_at:
        tier = Tier.HIGH_RISK
    elif total >= policy.suspicious_at:
        tier = Tier.SUSPICIOUS
    else:
        tier = Tier.BENIGN
    return Risk(total, tier)


# --------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class ExtensionReport:
    identity: ExtensionIdentity
    findings: tuple[Finding, ...] = ()
    dep_findings: tuple[Finding, ...] = ()
    intel: dict[str, str] = field(default_factory=dict)  # "kind:value" -> threat class
    risk: Risk = Risk(0, Tier.BENIGN)
    package_sha256: str = ""
    install_count: int | None = None

    @property
    def all_findings(self) -> tuple[Finding, ...]:
        return tuple(sort_findings(self.findings + self.dep_findings))

    def to_dict(self) -> dict[str, Any]:
        return {
            "identity": self.identity.to_dict(),
            "package_sha256": self.package_sha256,
            "install_count": self.install_count,
            "findings": [f.to_dict() for f in sort_findings(self.findings)],
            "dep_findings": [f.to_dict() for f in sort_findings(self.dep_findings)],
            "intel": dict(sorted(self.intel.items())),
            "risk": {"score": self.risk.score, "tier": self.risk.tier.value},
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ExtensionReport:
        return cls(
            identity=ExtensionIdentity.from_dict(d["identity"]),
            findings=tuple(Finding.from_dict(f) for f in d["findings"]),
            dep_findings=tuple(Finding.from_dict(f) for f in d["dep_findings"]),
            intel=dict(d.get("intel") or {}),
            risk=Risk(int(d["risk"]["score"]), Tier(d["risk"]["tier"])),
            package_sha256=d.get("package_sha256", ""),
            install_count=d.get("install_count"),
        )


def build_report(
    identity: ExtensionIdentity,
    findings: Iterable[Finding],
    dep_findings: Iterable[Finding] = (),
    intel: dict[str, str] | None = None,
    policy: Policy = DEFAULT_POLICY,
    package_sha256: str = "",
    install_count: int | None = None,
) -> ExtensionReport:
    f = tuple(sort_findings(findings))
    d = tuple(sort_findings(dep_findings))
    intel = dict(sorted((intel or {}).items()))
    return ExtensionReport(identity, f, d, intel, score(f + d, intel, policy), package_sha256, install_count)


# --------------------------------------------------------------------------
# categories


@dataclass(frozen=True)
class CategoryRow:
    key: str
    group: str
    label: str


ROWS = (
    CategoryRow("degrading-security-posture", "Malicious", "Degrading the Security Posture"),
    CategoryRow("critical-file-access", "Malicious", "Critical File Access"),
    CategoryRow("vt-extension", "Malicious", "VT >= threshold Extensions"),
    CategoryRow("vt-network", "Malicious", "VT >= threshold Network Requests"),
    CategoryRow("market-misuse", "Malicious", "Market Misuse"),
    CategoryRow("concealed-operations", "Malicious", "Concealed Operations"),
    CategoryRow("vulnerable", "Vulnerable", "Extensions with CVEs"),
    CategoryRow("api-usage", "API & Privacy", "Sensitive API Usage"),
    CategoryRow("network-dependency", "API & Privacy", "Network Dependencies"),
    CategoryRow("network-calls", "API & Privacy", "Network Call Sites"),
)
ROW_KEYS = tuple(r.key for r in ROWS)
HYGIENE = "hygiene"

_RULE_ROWS = {
    "SRC-TLS-DISABLE": "degrading-security-posture",
    "SRC-LOCAL-PROXY": "degrading-security-posture",
    "SRC-SETTINGS-MUTATION": "degrading-security-posture",
    "SRC-CRITICAL-FILE": "critical-file-access",
    "SRC-HIDDEN-TERMINAL": "concealed-operations",
    "SRC-SILENT-INSTALL": "concealed-operations",
    "MAN-NO-REPO": "market-misuse",
    "MAN-OVERSIZED": "market-misuse",
    "MAN-BUNDLED-BINARY": "market-misuse",
    "MAN-BUNDLED-MODULES": "market-misuse",
    "DEP-CVE": "vulnerable",
    "MAN-NET-DEP": "network-dependency",
    "SRC-NET-CALL": "network-calls",
}


def row_for_rule(rule_id: str) -> str:
    if rule_id not in RULES:
        raise UnknownRuleId(rule_id)
    if rule_id.startswith("SRC-API-"):
        return "api-usage"
    return _RULE_ROWS.get(rule_id, HYGIENE)


def categorize(report: ExtensionReport) -> list[str]:
    """Rows this extension occupies, in table order, then ``hygiene`` if any finding lands there."""
    keys = {row_for_rule(f.rule_id) for f in report.all_findings}
    for indicator, cls in report.intel.items():
        if cls == "malicious":
            keys.add("vt-extension" if indicator.startswith("file-hash:") else "vt-network")
    return [k for k in ROW_KEYS + (HYGIENE,) if k in keys]


# --------------------------------------------------------------------------
# corpus summary


@dataclass(frozen=True)
class SummaryRow:
    key: str
    group: str
    label: str
    extension_count: int
    cumulative_installs: int


@dataclass(frozen=True)
class CorpusSummary:
    scanned: int = 0
    rows: tuple[SummaryRow, ...] = ()
    row_sum_extensions: int = 0
    row_sum_installs: int = 0
    distinct_extensions: int = 0
    distinct_installs: int = 0
    unknown_install_counts: int = 0
    footnotes: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "scanned": self.scanned,
            "rows": [r.__dict__ for r in self.rows],
            "row_sum_extensions": self.row_sum_extensions,
            "row_sum_installs": self.row_sum_installs,
            "distinct_extensions": self.distinct_extensions,
            "distinct_installs": self.distinct_installs,
            "unknown_install_counts": self.unknown_install_counts,
            "footnotes": list(self.footnotes),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> CorpusSummary:
        return cls(
            scanned=d["scanned"],
            rows=tuple(SummaryRow(**r) for r in d["rows"]),
            row_sum_extensions=d["row_sum_extensions"],
            row_sum_installs=d["row_sum_installs"],
            distinct_extensions=d["distinct_extensions"],
            distinct_installs=d["distinct_installs"],
            unknown_install_counts=d["unknown_install_counts"],
            footnotes=tuple(d["footnotes"]),
        )


FOOTNOTE_OVERLAP = "Rows overlap: one extension can appear in several rows. Row sum counts it once per row; distinct counts it once."
FOOTNOTE_UNKNOWN = "{n} extension(s) have no known install count and contribute 0 installs."
FOOTNOTE_INTERSECTION = "Declared dependency ranges match a CVE when they intersect its affected range, an over-approximation."


def summarize(reports: Iterable[ExtensionReport], install_counts: dict[str, int] | None = None) -> CorpusSummary:
    reports = sorted(reports, key=lambda r: (r.identity.id, r.identity.version))
    install_counts = install_counts or {}
    if not reports:
        return CorpusSummary()

    def installs(r: ExtensionReport) -> int | None:
        if r.install_count is not None:
            return r.install_count
        return install_counts.get(r.identity.id)

    members: dict[str, list[ExtensionReport]] = {k: [] for k in ROW_KEYS}
    for r in reports:
        for key in categorize(r):
            if key != HYGIENE:
                members[key].append(r)
    rows = []
    for row in ROWS:
        ms = members[row.key]
        if ms:
            rows.append(SummaryRow(row.key, row.group, row.label, len(ms), sum(installs(m) or 0 for m in ms)))

    flagged = {(r.identity.id, r.identity.version): r for k in ROW_KEYS for r in members[k]}
    unknown = sum(1 for r in flagged.values() if installs(r) is None)
    notes = [FOOTNOTE_OVERLAP]
    if unknown:
        notes.append(FOOTNOTE_UNKNOWN.format(n=unknown))
    if members["vulnerable"]:
        notes.append(FOOTNOTE_INTERSECTION)
    return CorpusSummary(
        scanned=len(reports),
        rows=tuple(rows),
        row_sum_extensions=sum(r.extension_count for r in rows),
        row_sum_installs=sum(r.cumulative_installs for r in rows),
        distinct_extensions=len(flagged),
        distinct_installs=sum(installs(r) or 0 for r in flagged.values()),
        unknown_install_counts=unknown,
        footnotes=tuple(notes),
    )


@dataclass(frozen=True)
class CorpusReport:
    extensions: tuple[ExtensionReport, ...] = ()
    summary: CorpusSummary = CorpusSummary()
    failures: tuple[tuple[str, str], ...] = ()  # (input, error message)
    install_graph: dict[str, Any] | None = None

    @property
    def exit_code(self) -> int:
        return exit_code(self.extensions, bool(self.failures))

    def to_dict(self) -> dict[str, Any]:
        return {
            "extensions": [r.to_dict() for r in self.extensions],
            "summary": self.summary.to_dict(),
            "failures": [list(f) for f in self.failures],
            "install_graph": self.install_graph,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> CorpusReport:
        return cls(
            extensions=tuple(ExtensionReport.from_dict(r) for r in d["extensions"]),
            summary=CorpusSummary.from_dict(d["summary"]),
            failures=tuple((a, b) for a, b in d.get("failures", [])),
            install_graph=d.get("install_graph"),
        )


def build_corpus_report(
    reports: Iterable[ExtensionReport],
    failures: Iterable[tuple[str, str]] = (),
    install_counts: dict[str, int] | None = None,
    install_graph: dict[str, Any] | None = None,
) -> CorpusReport:
    ordered = tuple(sorted(reports, key=lambda r: (r.identity.id, r.identity.version, r.package_sha256)))
    return CorpusReport(ordered, summarize(ordered, install_counts), tuple(sorted(failures)), install_graph)


def exit_code(reports: Iterable[ExtensionReport], operational_error: bool = False) -> int:
    if operational_error:
        return 3
    return max((r.risk.tier.exit_code for r in reports), default=0)


# --------------------------------------------------------------------------
# emit / parse

Emittable = Union[ExtensionReport, CorpusReport, CorpusSummary]
FORMATS = ("structured", "text", "table")

_KINDS = {ExtensionReport: "extension-report", CorpusReport: "corpus-report", CorpusSummary: "corpus-summary"}


def emit(obj: Emittable, fmt: str = "structured") -> bytes:
    if fmt == "structured":
        doc = {"schema_version": SCHEMA_VERSION, "kind": _KINDS[type(obj)], **obj.to_dict()}
        return (json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode("utf-8")
    if fmt == "text":
        return _text(obj).encode("utf-8")
    if fmt == "table":
        return _table(obj).encode("utf-8")
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def parse(data: bytes | str) -> Emittable:
    doc = json.loads(data)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {doc.get('schema_version')!r}")
    kind = doc.pop("kind")
    doc.pop("schema_version")
    for cls, name in _KINDS.items():
        if name == kind:
            return cls.from_dict(doc)  # type: ignore[attr-defined]
    raise ValueError(f"unknown report kind {kind!r}")


def _text_report(r: ExtensionReport) -> list[str]:
    lines = [f"{r.identity}  risk {r.risk.score}/100 ({r.risk.tier.value})"]
    rows = [k for k in categorize(r) if k != HYGIENE]
    if rows:
        lines.append("  categories: " + ", ".join(rows))
    for ind, cls in r.intel.items():
        lines.append(f"  intel {ind}: {cls}")
    for f in r.all_findings:
        where = f" at {f.location}" if f.location else ""
        lines.append(f"  [{f.severity.value}] {f.rule_id}{where}")
        lines.append(f"      {f.evidence}")
    if len(lines) == 1:
        lines.append("  no findings")
    return lines


def _text_summary(s: CorpusSummary) -> list[str]:
    lines = [f"Scanned extensions: {s.scanned}"]
    for row in s.rows:
        lines.append(f"  {row.group} / {row.label}: {row.extension_count} extensions, {row.cumulative_installs} installs")
    lines.append(f"  Total (row sum): {s.row_sum_extensions} extensions, {s.row_sum_installs} installs")
    lines.append(f"  Total (distinct): {s.distinct_extensions} extensions, {s.distinct_installs} installs")
    lines.extend(f"  * {n}" for n in s.footnotes)
    return lines


def _text(obj: Emittable) -> str:
    if isinstance(obj, ExtensionReport):
        lines = _text_report(obj)
    elif isinstance(obj, CorpusSummary):
        lines = _text_summary(obj)
    else:
        lines = []
        for r in obj.extensions:
            lines.extend(_text_report(r))
            lines.append("")
        for src, err in obj.failures:
            lines.append(f"FAILED {src}: {err}")
        lines.extend(_text_summary(obj.summary))
    return "\n".join(lines) + "\n"


SUMMARY_HEADER = ["threat", "suspicious_type", "extension_count", "cumulative_install_count"]
FINDING_HEADER = ["extension", "version", "rule_id", "category", "severity", "location", "evidence"]


def _csv(rows: list[list[Any]]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _summary_rows(s: CorpusSummary) -> list[list[Any]]:
    rows: list[list[Any]] = [SUMMARY_HEADER]
    for r in s.rows:
        rows.append([r.group, r.label, r.extension_count, r.cumulative_installs])
    if s.rows:
        rows.append(["Total", "row sum", s.row_sum_extensions, s.row_sum_installs])
        rows.append(["Total", "distinct", s.distinct_extensions, s.distinct_installs])
    return rows


def _finding_rows(reports: Iterable[ExtensionReport]) -> list[list[Any]]:
    rows: list[list[Any]] = [FINDING_HEADER]
    for r in reports:
        for f in r.all_findings:
            rows.append(
                [r.identity.id, r.identity.version, f.rule_id, f.category.value, f.severity.value,
                 str(f.location) if f.location else "", f.evidence]
            )
    return rows


def _table(obj: Emittable) -> str:
    if isinstance(obj, CorpusSummary):
        return _csv(_summary_rows(obj))
    if isinstance(obj, ExtensionReport):
        return _csv(_finding_rows([obj]))
    return _csv(_summary_rows(obj.summary)) + "\n" + _csv(_finding_rows(obj.extensions))


__all__ = [
    "CorpusReport",
    "CorpusSummary",
    "ExtensionReport",
    "Risk",
    "Severity",
    "Tier",
    "build_corpus_report",
    "build_report",
    "categorize",
    "emit",
    "exit_code",
    "parse",
    "score",
    "summarize",
]
