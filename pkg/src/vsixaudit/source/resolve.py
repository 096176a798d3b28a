"""Binding resolution: which identifiers stand for which imported module paths."""

from __future__ import annotations

from dataclasses import dataclass

from ..model import Location
from .syntax import (
    REQUIRE_WRAPPERS,
    Assignment,
    Call,
    Identifier,
    ImportLike,
    Literal,
    MemberAccess,
    Node,
    ObjectLiteral,
    ObjectPattern,
    StringLiteral,
    SyntaxTree,
    member_chain,
    required_module,
)

EDITOR_MODULE = "vscode"
MAX_ALIAS_DEPTH = 2


def module_name(raw: str) -> str:
    return raw[5:] if raw.startswith("node:") else raw


@dataclass(frozen=True)
class Binding:
    module: str
    path: tuple[str, ...]
    via_alias: bool
    depth: int


@dataclass(frozen=True)
class ApiReference:
    namespace_path: tuple[str, ...]
    call_site: Location
    via_alias: bool
    argument_summary: tuple[str | None, ...] = ()

    @property
    def dotted(self) -> str:
        return ".".join(self.namespace_path)


def _strip_default(path: tuple[str, ...]) -> tuple[str, ...]:
    return path[1:] if path[:1] == ("default",) else path


class Resolver:
    """Maps identifiers to (module, member path) for a fixed set of modules.

    Shadowing is ignored: one name, one binding per file.
    """

    def __init__(self, tree: SyntaxTree, modules: set[str] | frozenset[str]):
        self.tree = tree
        self.modules = {module_name(m) for m in modules}
        self.bindings: dict[str, Binding] = {}
        self._collect()

    def _bind(self, name: str, binding: Binding) -> bool:
        old = self.bindings.get(name)
        if old is not None and (old.depth, old.path) <= (binding.depth, binding.path):
            return False
        self.bindings[name] = binding
        return True

    def _collect(self) -> None:
        for node in self.tree.nodes:
            if isinstance(node, ImportLike) and module_name(node.module) in self.modules:
                mod = module_name(node.module)
                for imported, local in node.bindings:
                    if imported in ("*", "default"):
                        self._bind(local, Binding(mod, (), False, 0))
                    else:
                        self._bind(local, Binding(mod, (imported,), True, 1))
        assigns = [n for n in self.tree.nodes if isinstance(n, Assignment) and n.op == "="]
        # Each pass can add one more alias hop.
        for _ in range(MAX_ALIAS_DEPTH + 1):
            changed = False
            for a in assigns:
                target = self.resolve(a.value)
                if target is None:
                    continue
                mod, path, via, depth = target
                if isinstance(a.target, Identifier):
                    if path == () and depth == 0:
                        changed |= self._bind(a.target.name, Binding(mod, (), via, 0))
                    elif depth + 1 <= MAX_ALIAS_DEPTH:
                        changed |= self._bind(a.target.name, Binding(mod, path, True, depth + 1))
                elif isinstance(a.target, ObjectPattern) and depth + 1 <= MAX_ALIAS_DEPTH:
                    for key, local in a.target.bindings:
                        changed |= self._bind(local, Binding(mod, path + (key,), True, depth + 1))
            if not changed:
                break

    def resolve(self, node: Node) -> tuple[str, tuple[str, ...], bool, int] | None:
        """(module, path, via_alias, alias depth) for an expression, or None."""
        if isinstance(node, Identifier):
            b = self.bindings.get(node.name)
            return (b.module, b.path, b.via_alias, b.depth) if b else None
        if isinstance(node, MemberAccess):
            root, props = member_chain(node)
            base = self.resolve(root)
            if base is None:
                return None
            mod, path, via, depth = base
            for p in props:
                if p is None:
                    break
                path = path + (p,)
            return mod, _strip_default(path) if not base[1] else path, via, depth
        if isinstance(node, Call):
            mod = required_module(node)
            if mod is not None and module_name(mod) in self.modules:
                return module_name(mod), (), False, 0
            if isinstance(node.callee, Identifier) and node.callee.name in REQUIRE_WRAPPERS and node.args:
                return self.resolve(node.args[0])
        return None

    def resolve_callee(self, call: Call) -> tuple[str, tuple[str, ...]] | None:
        r = self.resolve(call.callee)
        return (r[0], r[1]) if r else None


def summarize_args(args: tuple[Node, ...]) -> tuple[str | None, ...]:
    out: list[str | None] = []
    for a in args:
        if isinstance(a, StringLiteral) and a.complete:
            out.append(a.value)
        elif isinstance(a, Literal):
            out.append(repr(a.value) if not isinstance(a.value, str) else a.value)
        elif isinstance(a, ObjectLiteral):
            out.append("{" + ", ".join(k or "?" for k, _ in a.entries) + "}")
        else:
            out.append(None)
    return tuple(out)


def resolve_api_references(tree: SyntaxTree, module: str = EDITOR_MODULE) -> list[ApiReference]:
    """Member chains and alias uses rooted at an editor-API import."""
    resolver = Resolver(tree, {module})
    if not resolver.bindings:
        return []

    inner: set[int] = set()
    calls_by_callee: dict[int, Call] = {}
    for n in tree.nodes:
        if isinstance(n, MemberAccess):
            inner.add(id(n.object))
        elif isinstance(n, Call):
            calls_by_callee[id(n.callee)] = n

    # Alias-defining chains: value node id -> names it defines.
    defines: dict[int, list[str]] = {}
    for n in tree.nodes:
        if isinstance(n, Assignment) and n.op == "=":
            if isinstance(n.target, Identifier):
                names = [n.target.name]
            elif isinstance(n.target, ObjectPattern):
                names = [local for _, local in n.target.bindings]
            else:
                continue
            defines.setdefault(id(n.value), []).extend(names)

    candidates: list[tuple[ApiReference, str | None, int]] = []  # (ref, root alias name, value id)

    def add(node: Node, root_name: str | None) -> None:
        r = resolver.resolve(node)
        if r is None or not r[1]:
            return
        call = calls_by_callee.get(id(node))
        pos = call.pos if call is not None else node.pos  # type: ignore[union-attr]
        args = summarize_args(call.args) if call is not None else ()
        ref = ApiReference(r[1], Location(tree.path, pos.line, pos.column), r[2], args)
        candidates.append((ref, root_name, id(node)))

    arg_ids = {id(a) for n in tree.nodes if isinstance(n, Call) for a in n.args}
    for n in tree.nodes:
        if isinstance(n, MemberAccess) and id(n) not in inner:
            root, _ = member_chain(n)
            add(n, root.name if isinstance(root, Identifier) else None)
        elif isinstance(n, Identifier) and (id(n) in calls_by_callee or id(n) in arg_ids):
            b = resolver.bindings.get(n.name)
            if b is not None and b.via_alias:
                add(n, n.name)

    used = {root for _, root, _ in candidates if root is not None}
    refs = []
    for ref, _, node_id in candidates:
        names = defines.get(node_id)
        # A chain that only defines an alias counts once, at the alias's uses.
        if names and any(name in used and resolver.bindings.get(name) for name in names):
            continue
        refs.append(ref)
    refs.sort(key=lambda r: (r.call_site.line or 0, r.call_site.column or 0, r.namespace_path))
    return refs
