"""Detection rules over normalized syntax trees."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..model import ExtensionIdentity, Finding, Location, Severity, make_finding, sort_findings
from ..policy import DEFAULT_POLICY, Policy
from .resolve import EDITOR_MODULE, ApiReference, Resolver, module_name
from .syntax import (
    Assignment,
    Call,
    Identifier,
    Literal,
    MemberAccess,
    Node,
    ObjectLiteral,
    StringLiteral,
    SyntaxTree,
    literal_truthy,
)

INSTALL_COMMAND = "workbench.extensions.installExtension"
TLS_KEY = "NODE_TLS_REJECT_UNAUTHORIZED"
EXT_DIR_FRAGMENTS = (".vscode/extensions", ".vscode\\extensions")
SNIPPET_MAX = 120

READ_CALLS = frozenset({"readFile", "readFileSync", "createReadStream", "open", "openSync"})
WRITE_CALLS = frozenset({"writeFile", "writeFileSync", "createWriteStream", "appendFile", "appendFileSync"})
PATH_JOINERS = frozenset({"join", "resolve"})
SERVER_FACTORIES = frozenset({"createServer", "createSecureServer", "createProxyServer", "createProxy"})
HIDE_KEYS = ("hideFromUser", "hideUser")

STRUCTURAL_RULES = (
    "SRC-TLS-DISABLE",
    "SRC-SILENT-INSTALL",
    "SRC-HIDDEN-TERMINAL",
    "SRC-CRITICAL-FILE",
    "SRC-SETTINGS-MUTATION",
    "SRC-LOCAL-PROXY",
    "SRC-NET-CALL",
    "SRC-EXT-DIR-ACCESS",
)


@dataclass(frozen=True)
class ApiRule:
    pattern: tuple[str, ...]
    rule_id: str
    severity: Severity
    summary: str


def _api(pattern: str, rule_id: str, severity: Severity, summary: str) -> ApiRule:
    return ApiRule(tuple(pattern.split(".")), rule_id, severity, summary)


_MED, _LOW = Severity.MEDIUM, Severity.LOW
DEFAULT_API_WATCHLIST = (
    _api("workspace.fs", "SRC-API-WORKSPACE-FS", _MED, "arbitrary file read/write"),
    _api("workspace.createFileSystemWatcher", "SRC-API-FS-WATCHER", _LOW, "watches file changes"),
    _api("workspace.applyEdit", "SRC-API-APPLY-EDIT", _MED, "edits workspace files"),
    _api("workspace.findFiles", "SRC-API-FIND-FILES", _LOW, "enumerates workspace files"),
    _api("window.activeTextEditor", "SRC-API-ACTIVE-EDITOR", _LOW, "reads the open document"),
    _api("window.createTerminal", "SRC-API-CREATE-TERMINAL", _MED, "runs terminal commands"),
    _api("window.createWebviewPanel", "SRC-API-WEBVIEW", _LOW, "renders webview content"),
    _api("authentication.getSession", "SRC-API-AUTH-SESSION", _MED, "reads authentication sessions"),
    _api("extensions.getExtension", "SRC-API-GET-EXTENSION", _LOW, "inspects other extensions"),
    _api("env.openExternal", "SRC-API-OPEN-EXTERNAL", _LOW, "opens external URLs"),
    _api("env.clipboard", "SRC-API-CLIPBOARD", _MED, "accesses the clipboard"),
    _api("env.sessionId", "SRC-API-ENV-IDENTITY", _MED, "reads session identity"),
    _api("env.machineId", "SRC-API-ENV-IDENTITY", _MED, "reads machine identity"),
    _api("env.uiKind", "SRC-API-ENV-IDENTITY", _MED, "reads UI kind"),
    _api("env.remoteName", "SRC-API-ENV-IDENTITY", _MED, "reads remote name"),
    _api("env.appRoot", "SRC-API-ENV-IDENTITY", _MED, "reads install root"),
    _api("env.appHost", "SRC-API-ENV-IDENTITY", _MED, "reads app host"),
)


@dataclass(frozen=True)
class RuleSet:
    api_watchlist: tuple[ApiRule, ...] = DEFAULT_API_WATCHLIST
    pattern_rules: tuple[str, ...] = STRUCTURAL_RULES
    critical_path_watchlist: tuple[str, ...] = DEFAULT_POLICY.critical_paths
    network_modules: tuple[str, ...] = DEFAULT_POLICY.network_watchlist
    server_modules: tuple[str, ...] = DEFAULT_POLICY.server_modules
    max_parse_size: int = DEFAULT_POLICY.max_parse_size
    severity_overrides: dict[str, Severity] = field(default_factory=dict)

    def __post_init__(self) -> None:
        patterns = [r.pattern for r in self.api_watchlist]
        if len(patterns) != len(set(patterns)):
            raise ValueError("duplicate API watchlist pattern")
        if len(self.pattern_rules) != len(set(self.pattern_rules)):
            raise ValueError("duplicate structural rule id")

    @classmethod
    def from_policy(cls, policy: Policy) -> RuleSet:
        watch = tuple(
            ApiRule(r.pattern, r.rule_id, policy.severity_for(r.rule_id), r.summary) for r in DEFAULT_API_WATCHLIST
        )
        return cls(
            api_watchlist=watch,
            critical_path_watchlist=policy.critical_paths,
            network_modules=policy.network_watchlist,
            server_modules=policy.server_modules,
            max_parse_size=policy.max_parse_size,
            severity_overrides=dict(policy.severity_overrides),
        )

    def severity(self, rule_id: str) -> Severity | None:
        return self.severity_overrides.get(rule_id)

    def match_api(self, path: tuple[str, ...]) -> ApiRule | None:
        for r in self.api_watchlist:
            if path[: len(r.pattern)] == r.pattern:
                return r
        return None


DEFAULT_RULES = RuleSet()

# Attributed to findings when a tree is scanned outside any package.
ANONYMOUS = ExtensionIdentity("unknown", "unknown")


def snippet(line: str, column: int | None) -> str:
    """A substring of ``line`` starting near ``column``."""
    start = column or 0
    piece = line[start : start + SNIPPET_MAX].strip()
    if not piece:
        piece = line.strip()[:SNIPPET_MAX].strip()
    return piece


def evidence(description: str, line: str, column: int | None) -> tuple[str, str]:
    snip = snippet(line, column)
    return (f'{description}: "{snip}"' if snip else description), snip


# --------------------------------------------------------------------------
# editor API usage


def detect_api_usage(
    refs: list[ApiReference],
    rules: RuleSet = DEFAULT_RULES,
    subject: ExtensionIdentity | None = None,
    tree: SyntaxTree | None = None,
) -> list[Finding]:
    """One finding per (watchlist rule, file), with the per-file usage count."""
    grouped: dict[tuple[str, str], list[tuple[ApiReference, ApiRule]]] = {}
    for ref in refs:
        r = rules.match_api(ref.namespace_path)
        if r is not None:
            grouped.setdefault((r.rule_id, ref.call_site.path), []).append((ref, r))
    out = []
    for (rule_id, _path), hits in grouped.items():
        hits.sort(key=lambda h: (h[0].call_site.line or 0, h[0].call_site.column or 0))
        first, r = hits[0]
        line = tree.line_text(first.call_site.line or 0) if tree is not None else ""
        text, snip = evidence(f"{EDITOR_MODULE}.{first.dotted} ({r.summary})", line, first.call_site.column)
        out.append(
            make_finding(
                rule_id,
                subject or ANONYMOUS,
                text,
                first.call_site,
                r.severity,
                usage_count=len(hits),
                apis=sorted({h[0].dotted for h in hits}),
                via_alias=any(h[0].via_alias for h in hits),
                snippet=snip,
            )
        )
    return sort_findings(out)


# --------------------------------------------------------------------------
# structural patterns


def _is_zero(node: Node | None) -> bool:
    if isinstance(node, Literal):
        return not isinstance(node.value, bool) and node.value == 0
    if isinstance(node, StringLiteral):
        return node.complete and (node.value or "").strip() == "0"
    return False


def _last_prop(node: Node) -> str | None:
    if isinstance(node, MemberAccess):
        return node.prop
    if isinstance(node, Identifier):
        return node.name
    return None


def _runs(parts: list[str | None]) -> list[str]:
    """Maximal literal runs between unknown holes."""
    runs, buf = [], []
    for p in parts:
        if p is None:
            if buf:
                runs.append("".join(buf))
            buf = []
        else:
            buf.append(p)
    if buf:
        runs.append("".join(buf))
    return runs


class _Context:
    def __init__(self, tree: SyntaxTree, rules: RuleSet, subject: ExtensionIdentity | None):
        self.tree = tree
        self.rules = rules
        self.subject = subject
        self.out: list[Finding] = []
        modules = {EDITOR_MODULE, *rules.network_modules, *rules.server_modules}
        self.resolver = Resolver(tree, modules)
        self.network = {module_name(m) for m in rules.network_modules}
        self.servers = {module_name(m) for m in rules.server_modules}

        # Single-assignment constants, for one-hop propagation.
        counts: dict[str, int] = {}
        values: dict[str, Node] = {}
        for n in tree.nodes:
            if isinstance(n, Assignment) and isinstance(n.target, Identifier):
                counts[n.target.name] = counts.get(n.target.name, 0) + 1
                if n.declaration and n.op == "=":
                    values[n.target.name] = n.value
        self.consts = {k: v for k, v in values.items() if counts[k] == 1}

    def deref(self, node: Node | None) -> Node | None:
        if isinstance(node, Identifier) and node.name in self.consts:
            return self.consts[node.name]
        return node

    def emit(self, rule_id: str, description: str, pos, **metadata) -> None:
        line = self.tree.line_text(pos.line)
        text, snip = evidence(description, line, pos.column)
        self.out.append(
            make_finding(
                rule_id,
                self.subject or ANONYMOUS,
                text,
                Location(self.tree.path, pos.line, pos.column),
                self.rules.severity(rule_id),
                snippet=snip,
                **metadata,
            )
        )

    def editor_path(self, call: Call) -> tuple[str, ...] | None:
        r = self.resolver.resolve_callee(call)
        return r[1] if r and r[0] == EDITOR_MODULE else None

    def path_parts(self, node: Node | None, depth: int = 0) -> list[str | None]:
        """Best-effort literal view of a path expression, with None for unknowns."""
        node = self.deref(node) if depth < 3 else node
        if depth > 6 or node is None:
            return [None]
        if isinstance(node, StringLiteral):
            return list(node.parts)
        if isinstance(node, Call) and node.args:
            if _last_prop(node.callee) in PATH_JOINERS:
                parts: list[str | None] = []
                for i, a in enumerate(node.args):
                    if i:
                        parts.append("/")
                    parts.extend(self.path_parts(a, depth + 1))
                return parts
            return self.path_parts(node.args[0], depth + 1)
        if isinstance(node, MemberAccess) and node.prop in ("fsPath", "path"):
            return self.path_parts(node.object, depth + 1)
        return [None]


def _tls(ctx: _Context) -> None:
    for n in ctx.tree.nodes:
        if isinstance(n, Assignment) and isinstance(n.target, MemberAccess) and n.target.prop == TLS_KEY:
            if _is_zero(ctx.deref(n.value)):
                ctx.emit("SRC-TLS-DISABLE", f"{TLS_KEY} set to 0", n.pos)
        elif isinstance(n, ObjectLiteral):
            for key, value in n.entries:
                if key == TLS_KEY and _is_zero(ctx.deref(value)):
                    ctx.emit("SRC-TLS-DISABLE", f"{TLS_KEY} set to 0 in an environment object", value.pos)


def _silent_install(ctx: _Context) -> None:
    for n in ctx.tree.of(Call):
        if ctx.editor_path(n) != ("commands", "executeCommand") or not n.args:
            continue
        first = ctx.deref(n.args[0])
        if isinstance(first, StringLiteral) and first.complete:
            if first.value == INSTALL_COMMAND:
                target = ctx.deref(n.args[1]) if len(n.args) > 1 else None
                tval = target.value if isinstance(target, StringLiteral) and target.complete else None
                ctx.emit("SRC-SILENT-INSTALL", f"executeCommand({INSTALL_COMMAND})", n.pos, target=tval)
        else:
            ctx.emit("SRC-SILENT-INSTALL-MAYBE", "executeCommand with a computed command id", n.pos)


def _hidden_terminal(ctx: _Context) -> None:
    for n in ctx.tree.of(Call):
        if ctx.editor_path(n) != ("window", "createTerminal"):
            continue
        for a in n.args:
            opts = ctx.deref(a)
            if not isinstance(opts, ObjectLiteral):
                continue
            for key in HIDE_KEYS:
                if literal_truthy(ctx.deref(opts.get(key))):
                    ctx.emit("SRC-HIDDEN-TERMINAL", f"createTerminal with {key} set", n.pos, option=key)
                    break
            else:
                continue
            break


def _critical_file(ctx: _Context) -> None:
    watch = ctx.rules.critical_path_watchlist
    for n in ctx.tree.of(Call):
        if _last_prop(n.callee) not in READ_CALLS or not n.args:
            continue
        runs = _runs(ctx.path_parts(n.args[0]))
        hit = next((frag for frag in watch for run in runs if frag in run), None)
        if hit is not None:
            ctx.emit("SRC-CRITICAL-FILE", f"reads a path containing {hit}", n.pos, fragment=hit)


def _settings_mutation(ctx: _Context) -> None:
    for n in ctx.tree.of(Call):
        callee = n.callee
        if isinstance(callee, MemberAccess) and callee.prop == "update":
            target = ctx.deref(callee.object)
            if isinstance(target, Call) and ctx.editor_path(target) == ("workspace", "getConfiguration"):
                ctx.emit("SRC-SETTINGS-MUTATION", "getConfiguration().update", n.pos, via="configuration")
                continue
        if _last_prop(callee) in WRITE_CALLS and n.args:
            parts = ctx.path_parts(n.args[0])
            if parts and isinstance(parts[-1], str) and parts[-1].endswith("settings.json"):
                ctx.emit("SRC-SETTINGS-MUTATION", "writes settings.json", n.pos, via="file-write")


def _local_proxy(ctx: _Context) -> None:
    listened: set[int] = set()
    for n in ctx.tree.of(MemberAccess):
        if n.prop == "listen":
            obj = ctx.deref(n.object)
            listened.add(id(obj))
    for n in ctx.tree.of(Call):
        r = ctx.resolver.resolve_callee(n)
        if r is None or r[0] not in ctx.servers:
            continue
        mod, path = r
        last = path[-1] if path else None
        if last in SERVER_FACTORIES or (n.new and last == "Server") or (mod == "http-proxy" and not path):
            ctx.emit(
                "SRC-LOCAL-PROXY", f"{mod}.{'.'.join(path) or '(default)'} creates a server", n.pos,
                module=mod, listen=id(n) in listened,
            )


def _net_calls(ctx: _Context) -> None:
    first: dict[str, Call] = {}
    counts: dict[str, int] = {}
    for n in ctx.tree.of(Call):
        r = ctx.resolver.resolve_callee(n)
        if r is None or r[0] not in ctx.network:
            continue
        counts[r[0]] = counts.get(r[0], 0) + 1
        first.setdefault(r[0], n)
    for mod in sorted(first):
        ctx.emit("SRC-NET-CALL", f"network call through {mod}", first[mod].pos, module=mod, call_count=counts[mod])


def _ext_dir(ctx: _Context) -> None:
    def hit(runs: list[str]) -> bool:
        return any(f in run for run in runs for f in EXT_DIR_FRAGMENTS)

    matched: set[int] = set()
    for n in ctx.tree.of(StringLiteral):
        if hit(_runs(list(n.parts))):
            matched.add(id(n))
            ctx.emit("SRC-EXT-DIR-ACCESS", "references .vscode/extensions", n.pos)
    for n in ctx.tree.of(Call):
        if _last_prop(n.callee) in PATH_JOINERS and not any(id(a) in matched for a in n.args):
            if hit(_runs(ctx.path_parts(n))):
                ctx.emit("SRC-EXT-DIR-ACCESS", "builds a .vscode/extensions path", n.pos)


_DETECTORS = {
    "SRC-TLS-DISABLE": _tls,
    "SRC-SILENT-INSTALL": _silent_install,
    "SRC-HIDDEN-TERMINAL": _hidden_terminal,
    "SRC-CRITICAL-FILE": _critical_file,
    "SRC-SETTINGS-MUTATION": _settings_mutation,
    "SRC-LOCAL-PROXY": _local_proxy,
    "SRC-NET-CALL": _net_calls,
    "SRC-EXT-DIR-ACCESS": _ext_dir,
}


def detect_patterns(
    tree: SyntaxTree, rules: RuleSet = DEFAULT_RULES, subject: ExtensionIdentity | None = None
) -> list[Finding]:
    ctx = _Context(tree, rules, subject)
    for rule_id in rules.pattern_rules:
        _DETECTORS[rule_id](ctx)
    return sort_findings(ctx.out)
