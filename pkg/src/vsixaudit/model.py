"""Core value types shared by every stage: identities, findings, the rule catalog."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .errors import UnknownRuleId

_ID_PART = re.compile(r"^[^/\\\x00]+$")


@dataclass(frozen=True, order=True)
class ExtensionIdentity:
    publisher: str
    name: str
    version: str = "0.0.0"

    def __post_init__(self) -> None:
        for part in (self.publisher, self.name):
            if not part or not _ID_PART.match(part):
                raise ValueError(f"invalid extension identity component: {part!r}")

    @property
    def id(self) -> str:
        return f"{self.publisher}.{self.name}"

    def __str__(self) -> str:
        return f"{self.id}@{self.version}"

    def to_dict(self) -> dict[str, str]:
        return {"publisher": self.publisher, "name": self.name, "version": self.version}

    @classmethod
    def from_dict(cls, data: dict[str, str]) -> ExtensionIdentity:
        return cls(data["publisher"], data["name"], data.get("version", "0.0.0"))


class Severity(str, Enum):
    INFO = "info"
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"

    @property
    def rank(self) -> int:
        return _SEVERITY_RANK[self]


_SEVERITY_RANK = {s: i for i, s in enumerate(Severity)}


class Category(str, Enum):
    MALICIOUS = "malicious-indicator"
    VULNERABLE = "vulnerable"
    PRIVACY = "privacy"
    MARKET_MISUSE = "market-misuse"
    HYGIENE = "hygiene"


@dataclass(frozen=True, order=True)
class Location:
    path: str
    line: int | None = None
    column: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"path": self.path, "line": self.line, "column": self.column}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Location:
        return cls(data["path"], data.get("line"), data.get("column"))

    def __str__(self) -> str:
        if self.line is None:
            return self.path
        if self.column is None:
            return f"{self.path}:{self.line}"
        return f"{self.path}:{self.line}:{self.column}"


@dataclass(frozen=True)
class RuleInfo:
    rule_id: str
    category: Category
    severity: Severity
    summary: str


def _r(rule_id: str, category: Category, severity: Severity, summary: str) -> RuleInfo:
    return RuleInfo(rule_id, category, severity, summary)


_M, _V, _P, _K, _H = (
    Category.MALICIOUS,
    Category.VULNERABLE,
    Category.PRIVACY,
    Category.MARKET_MISUSE,
    Category.HYGIENE,
)
_I, _L, _MED, _HI, _C = Severity.INFO, Severity.LOW, Severity.MEDIUM, Severity.HIGH, Severity.CRITICAL

# The closed catalog. Reports may only carry ids listed here.
RULES: dict[str, RuleInfo] = {
    r.rule_id: r
    for r in [
        # package reader
        _r("PKG-ID-MISMATCH", _H, _L, "manifest identity differs from the archive's declared identity"),
        _r("PKG-DUPLICATE-ENTRY", _H, _MED, "archive lists the same path more than once"),
        _r("PKG-ENTRY-UNREADABLE", _H, _L, "archive entry could not be decompressed"),
        # manifest analyzer
        _r("MAN-PACK-INSTALL", _M, _MED, "extensionPack installs other extensions without consent"),
        _r("MAN-DEP-INSTALL", _M, _MED, "extensionDependencies installs other extensions without consent"),
        _r("MAN-UNTRUSTED-WS", _M, _MED, "extension opts in to run in untrusted workspaces"),
        _r("MAN-UNTRUSTED-WS-LIMITED", _M, _I, "extension runs with limited support in untrusted workspaces"),
        _r("MAN-NO-REPO", _K, _L, "extension published without a repository"),
        _r("MAN-NET-DEP", _P, _I, "dependency on a network-request package"),
        _r("MAN-OVERSIZED", _K, _MED, "package size is abnormally large"),
        _r("MAN-BUNDLED-BINARY", _K, _MED, "package bundles a native executable or archive"),
        _r("MAN-BUNDLED-MODULES", _K, _L, "package bundles a large node_modules tree"),
        # source scanner: editor API watchlist
        _r("SRC-API-WORKSPACE-FS", _P, _MED, "workspace.fs can read and write arbitrary files"),
        _r("SRC-API-FS-WATCHER", _P, _L, "workspace.createFileSystemWatcher monitors file changes"),
        _r("SRC-API-APPLY-EDIT", _P, _MED, "workspace.applyEdit modifies workspace files"),
        _r("SRC-API-FIND-FILES", _P, _L, "workspace.findFiles enumerates workspace files"),
        _r("SRC-API-ACTIVE-EDITOR", _P, _L, "window.activeTextEditor exposes the open document"),
        _r("SRC-API-CREATE-TERMINAL", _P, _MED, "window.createTerminal can run arbitrary commands"),
        _r("SRC-API-WEBVIEW", _P, _L, "window.createWebviewPanel renders arbitrary content"),
        _r("SRC-API-AUTH-SESSION", _P, _MED, "authentication.getSession reads authentication sessions"),
        _r("SRC-API-GET-EXTENSION", _P, _L, "extensions.getExtension inspects other installed extensions"),
        _r("SRC-API-OPEN-EXTERNAL", _P, _L, "env.openExternal opens URLs or files externally"),
        _r("SRC-API-CLIPBOARD", _P, _MED, "env.clipboard reads or writes the clipboard"),
        _r("SRC-API-ENV-IDENTITY", _P, _MED, "env identity values expose system and session information"),
        # source scanner: structural patterns
        _r("SRC-TLS-DISABLE", _M, _C, "NODE_TLS_REJECT_UNAUTHORIZED disabled"),
        _r("SRC-SILENT-INSTALL", _M, _HI, "installs an extension through executeCommand"),
        _r("SRC-SILENT-INSTALL-MAYBE", _M, _MED, "executeCommand with a non-literal command may install extensions"),
        _r("SRC-HIDDEN-TERMINAL", _M, _HI, "terminal created hidden from the user"),
        _r("SRC-CRITICAL-FILE", _M, _C, "reads a secret-bearing file"),
        _r("SRC-SETTINGS-MUTATION", _M, _MED, "modifies editor settings"),
        _r("SRC-LOCAL-PROXY", _M, _HI, "starts a local server"),
        _r("SRC-NET-CALL", _P, _I, "network request through a network package"),
        _r("SRC-EXT-DIR-ACCESS", _M, _HI, "references the installed-extensions folder"),
        _r("SRC-UNPARSEABLE", _H, _I, "source could not be parsed; token-level fallback used"),
        _r("SRC-SKIPPED", _H, _I, "source exceeds the parse size limit and was skipped"),
        _r("SRC-LOSSY-DECODE", _H, _I, "source is not valid UTF-8; decoded with replacement"),
        # dependency auditor
        _r("DEP-CVE", _V, _MED, "dependency matches a known vulnerability"),
        _r("DEP-RANGE-UNPARSEABLE", _H, _I, "dependency version range could not be interpreted"),
        # install graph
        _r("GRAPH-SELF-EDGE", _H, _I, "extension declares itself as an install target"),
        _r("GRAPH-BAD-TARGET", _H, _I, "install target is not a valid extension id"),
        _r("GRAPH-CYCLE", _H, _L, "extensions install each other in a cycle"),
    ]
}


def rule(rule_id: str) -> RuleInfo:
    try:
        return RULES[rule_id]
    except KeyError:
        raise UnknownRuleId(rule_id) from None


@dataclass(frozen=True)
class Finding:
    rule_id: str
    category: Category
    severity: Severity
    subject: ExtensionIdentity
    evidence: str
    location: Location | None = None
    metadata: dict[str, Any] = field(default_factory=dict, compare=True, hash=False)

    def __post_init__(self) -> None:
        if self.rule_id not in RULES:
            raise UnknownRuleId(self.rule_id)
        if not self.evidence:
            raise ValueError(f"{self.rule_id}: evidence must be non-empty")

    def sort_key(self) -> tuple:
        loc = self.location
        return (
            self.rule_id,
            loc.path if loc else "",
            (loc.line or 0) if loc else 0,
            (loc.column or 0) if loc else 0,
            self.evidence,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "rule_id": self.rule_id,
            "category": self.category.value,
            "severity": self.severity.value,
            "subject": self.subject.to_dict(),
            "location": self.location.to_dict() if self.location else None,
            "evidence": self.evidence,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Finding:
        loc = data.get("location")
        return cls(
            rule_id=data["rule_id"],
            category=Category(data["category"]),
            severity=Severity(data["severity"]),
            subject=ExtensionIdentity.from_dict(data["subject"]),
            evidence=data["evidence"],
            location=Location.from_dict(loc) if loc else None,
            metadata=dict(data.get("metadata") or {}),
        )


def make_finding(
    rule_id: str,
    subject: ExtensionIdentity,
    evidence: str,
    location: Location | None = None,
    severity: Severity | None = None,
    **metadata: Any,
) -> Finding:
    """Build a finding with the catalog's category and (overridable) severity."""
    info = rule(rule_id)
    return Finding(
        rule_id=rule_id,
        category=info.category,
        severity=severity or info.severity,
        subject=subject,
        evidence=evidence,
        location=location,
        metadata=metadata,
    )


def sort_findings(findings) -> list[Finding]:
    return sorted(findings, key=Finding.sort_key)
