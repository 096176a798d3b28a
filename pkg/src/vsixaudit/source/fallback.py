"""Token-level scan for sources the parser rejects.

Only rules that survive without call shape run here: TLS disabling, the
install-command literal, critical-path fragments and the extensions folder.
"""

from __future__ import annotations

import re

from ..model import ExtensionIdentity, Finding, Location, make_finding, sort_findings
from .rules import ANONYMOUS, EXT_DIR_FRAGMENTS, INSTALL_COMMAND, TLS_KEY, RuleSet, evidence

SKIPPED_RULES = ("SRC-HIDDEN-TERMINAL", "SRC-SETTINGS-MUTATION", "SRC-LOCAL-PROXY", "SRC-NET-CALL")

_TLS = re.compile(TLS_KEY + r"""['"`]?\s*\]?\s*(?::|=(?!=))\s*['"`]?0(?![\d.xXbBoO])""")
_STRING = re.compile(r"""(['"`])((?:\\.|(?!\1)[^\\\n])*)\1""")
_INSTALL_CALL = re.compile(r"executeCommand\s*\)?\s*\(\s*$")


class _Lines:
    def __init__(self, text: str):
        self.text = text
        self.starts = [0] + [m.end() for m in re.finditer("\n", text)]
        self.lines = [ln[:-1] if ln.endswith("\r") else ln for ln in text.split("\n")]

    def locate(self, offset: int) -> tuple[int, int]:
        lo, hi = 0, len(self.starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.starts[mid] <= offset:
                lo = mid
            else:
                hi = mid - 1
        return lo + 1, offset - self.starts[lo]


def fallback_scan(
    path: str, text: str, rules: RuleSet, subject: ExtensionIdentity | None = None
) -> list[Finding]:
    lines = _Lines(text)
    out: list[Finding] = []
    enabled = set(rules.pattern_rules)

    def emit(rule_id: str, description: str, offset: int, **metadata) -> None:
        line, col = lines.locate(offset)
        ev, snip = evidence(description, lines.lines[line - 1], col)
        out.append(
            make_finding(
                rule_id, subject or ANONYMOUS, ev, Location(path, line, col), rules.severity(rule_id),
                snippet=snip, fallback=True, **metadata,
            )
        )

    if "SRC-TLS-DISABLE" in enabled:
        for m in _TLS.finditer(text):
            emit("SRC-TLS-DISABLE", f"{TLS_KEY} set to 0", m.start())

    for m in _STRING.finditer(text):
        body = m.group(2)
        if "SRC-SILENT-INSTALL" in enabled and body == INSTALL_COMMAND:
            before = text[max(0, m.start() - 200) : m.start()]
            if _INSTALL_CALL.search(before):
                emit("SRC-SILENT-INSTALL", f"executeCommand({INSTALL_COMMAND})", m.start())
            else:
                emit("SRC-SILENT-INSTALL-MAYBE", f"{INSTALL_COMMAND} literal", m.start())
        if "SRC-CRITICAL-FILE" in enabled:
            hit = next((f for f in rules.critical_path_watchlist if f in body), None)
            if hit is not None:
                emit("SRC-CRITICAL-FILE", f"string contains {hit}", m.start(), fragment=hit)
        if "SRC-EXT-DIR-ACCESS" in enabled:
            # The raw token keeps backslashes doubled.
            if any(f in body or f.replace("\\", "\\\\") in body for f in EXT_DIR_FRAGMENTS):
                emit("SRC-EXT-DIR-ACCESS", "references .vscode/extensions", m.start())
    return sort_findings(out)
