"""Per-package source scanning."""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import FileTooLarge
from ..model import ExtensionIdentity, Finding, Location, make_finding, sort_findings
from ..package import EntryKind, ExtensionPackage
from .fallback import SKIPPED_RULES, fallback_scan
from .resolve import resolve_api_references
from .rules import ANONYMOUS, DEFAULT_RULES, RuleSet, detect_api_usage, detect_patterns, evidence
from .syntax import StringLiteral, SyntaxTree, parse_text

_URL_HOST = re.compile(r"\b(?:https?|wss?)://(?:[^/\s@?#]*@)?(\[[0-9a-fA-F:.]+\]|[A-Za-z0-9.-]+)")


@dataclass(frozen=True)
class FileStats:
    path: str
    size: int
    status: str  # parsed | fallback | skipped | unreadable
    nodes: int = 0
    refs: int = 0
    findings: int = 0
    hosts: tuple[str, ...] = ()


@dataclass(frozen=True)
class SourceScanResult:
    identity: ExtensionIdentity
    findings: tuple[Finding, ...]
    files: tuple[FileStats, ...]

    @property
    def file_count(self) -> int:
        return len(self.files)

    @property
    def hosts(self) -> tuple[str, ...]:
        """Hosts of URL literals across all parsed files, sorted and deduplicated."""
        return tuple(sorted({h for f in self.files for h in f.hosts}))


def url_hosts(tree: SyntaxTree) -> tuple[str, ...]:
    """Hosts named by http(s)/ws(s) URLs in string literals and template fragments."""
    found: set[str] = set()
    for lit in tree.of(StringLiteral):
        for frag in lit.fragments:
            for m in _URL_HOST.finditer(frag):
                host = m.group(1).strip("[]").rstrip(".").lower()
                if host:
                    found.add(host)
    return tuple(sorted(found))


def decode_source(data: bytes) -> tuple[str, bool]:
    """Return (text, lossy)."""
    if data.startswith(b"\xef\xbb\xbf"):
        data = data[3:]
    try:
        return data.decode("utf-8"), False
    except UnicodeDecodeError:
        return data.decode("utf-8", "replace"), True


def parse_source(path: str, data: bytes, max_size: int = DEFAULT_RULES.max_parse_size) -> SyntaxTree:
    """Decode and parse one file. Raises FileTooLarge past ``max_size``."""
    if len(data) > max_size:
        raise FileTooLarge(path, len(data), max_size)
    text, _ = decode_source(data)
    return parse_text(path, text)


def scan_file(
    path: str, data: bytes, rules: RuleSet = DEFAULT_RULES, subject: ExtensionIdentity | None = None
) -> tuple[list[Finding], FileStats]:
    who = subject or ANONYMOUS
    if len(data) > rules.max_parse_size:
        f = make_finding(
            "SRC-SKIPPED", who, f"{len(data)} bytes exceeds the {rules.max_parse_size}-byte parse limit",
            Location(path), rules.severity("SRC-SKIPPED"), size=len(data),
        )
        return [f], FileStats(path, len(data), "skipped", findings=1)

    text, lossy = decode_source(data)
    findings: list[Finding] = []
    if lossy:
        findings.append(
            make_finding(
                "SRC-LOSSY-DECODE", who, "invalid UTF-8 replaced with U+FFFD", Location(path),
                rules.severity("SRC-LOSSY-DECODE"),
            )
        )
    tree = parse_text(path, text)
    if not tree.ok:
        line = _error_line(tree.error)
        ev, snip = evidence(
            f"{tree.error}; skipped {', '.join(SKIPPED_RULES)}", tree.line_text(line) if line else "", 0
        )
        findings.append(
            make_finding(
                "SRC-UNPARSEABLE", who, ev, Location(path, line) if line else Location(path),
                rules.severity("SRC-UNPARSEABLE"), snippet=snip, skipped_rules=list(SKIPPED_RULES),
            )
        )
        findings.extend(fallback_scan(path, text, rules, subject))
        return findings, FileStats(path, len(data), "fallback", findings=len(findings))

    refs = resolve_api_references(tree)
    findings.extend(detect_api_usage(refs, rules, subject, tree))
    findings.extend(detect_patterns(tree, rules, subject))
    return findings, FileStats(
        path, len(data), "parsed", len(tree.nodes), len(refs), len(findings), url_hosts(tree)
    )


def _error_line(message: str | None) -> int | None:
    if message and " at line " in message:
        try:
            return int(message.split(" at line ", 1)[1].split(",", 1)[0])
        except ValueError:
            return None
    return None


def scan_extension(package: ExtensionPackage, rules: RuleSet = DEFAULT_RULES) -> SourceScanResult:
    findings: list[Finding] = []
    stats: list[FileStats] = []
    for entry in package.inventory.entries:
        if entry.kind is not EntryKind.ECMASCRIPT:
            continue
        if not entry.readable:
            stats.append(FileStats(entry.path, entry.size, "unreadable"))
            continue
        if entry.size > rules.max_parse_size:
            # Skip without decompressing.
            f = make_finding(
                "SRC-SKIPPED", package.identity,
                f"{entry.size} bytes exceeds the {rules.max_parse_size}-byte parse limit",
                Location(entry.path), rules.severity("SRC-SKIPPED"), size=entry.size,
            )
            findings.append(f)
            stats.append(FileStats(entry.path, entry.size, "skipped", findings=1))
            continue
        try:
            data = package.read_entry(entry.path)
        except Exception:  # noqa: BLE001 - a broken entry must not end the scan
            stats.append(FileStats(entry.path, entry.size, "unreadable"))
            continue
        file_findings, st = scan_file(entry.path, data, rules, package.identity)
        findings.extend(file_findings)
        stats.append(st)
    return SourceScanResult(package.identity, tuple(sort_findings(findings)), tuple(stats))
