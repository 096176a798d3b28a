"""Normalized syntax trees for ECMAScript sources.

tree-sitter produces a concrete syntax tree; rules never look at it directly.
Instead :func:`parse_source` lowers it into a small set of immutable node
classes (identifiers, folded string literals, member accesses, calls,
assignments, import-like bindings and object literals), each with a
1-based line and 0-based character column.

String folding happens during lowering: ``'a' + 'b'`` and template literals
without substitutions become one complete :class:`StringLiteral`; anything
with an unknown operand keeps its literal fragments around a hole.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from typing import Iterator, Union

import tree_sitter_javascript
from tree_sitter import Language, Parser

# --------------------------------------------------------------------------
# node classes


@dataclass(frozen=True, slots=True)
class Pos:
    line: int
    column: int


@dataclass(frozen=True, slots=True)
class Identifier:
    name: str
    pos: Pos


@dataclass(frozen=True, slots=True)
class StringLiteral:
    # Literal text pieces; None marks a hole where an unknown value goes.
    parts: tuple[str | None, ...]
    pos: Pos

    @property
    def complete(self) -> bool:
        return None not in self.parts

    @property
    def value(self) -> str | None:
        return "".join(self.parts) if self.complete else None  # type: ignore[arg-type]

    @property
    def fragments(self) -> tuple[str, ...]:
        return tuple(p for p in self.parts if p)


@dataclass(frozen=True, slots=True)
class Literal:
    """Numbers, booleans and null."""

    value: float | int | bool | None
    pos: Pos


@dataclass(frozen=True, slots=True)
class MemberAccess:
    object: Node
    prop: str | None  # None for computed access with a non-literal key
    pos: Pos


@dataclass(frozen=True, slots=True)
class Call:
    callee: Node
    args: tuple[Node, ...]
    pos: Pos
    new: bool = False


@dataclass(frozen=True, slots=True)
class ObjectPattern:
    bindings: tuple[tuple[str, str], ...]  # (property key, local name)
    pos: Pos


@dataclass(frozen=True, slots=True)
class Assignment:
    target: Node
    value: Node
    pos: Pos
    op: str = "="
    declaration: bool = False


@dataclass(frozen=True, slots=True)
class ImportLike:
    module: str
    bindings: tuple[tuple[str, str], ...]  # (imported name or "*" / "default", local name)
    pos: Pos


@dataclass(frozen=True, slots=True)
class ObjectLiteral:
    entries: tuple[tuple[str | None, Node], ...]
    pos: Pos

    def get(self, key: str) -> Node | None:
        for k, v in self.entries:
            if k == key:
                return v
        return None


@dataclass(frozen=True, slots=True)
class Unknown:
    pos: Pos


Node = Union[
    Identifier, StringLiteral, Literal, MemberAccess, Call, ObjectPattern, Assignment, ImportLike, ObjectLiteral, Unknown
]

# Classes counted as "normalized nodes" in tree statistics.
COUNTED_CLASSES = (Identifier, StringLiteral, MemberAccess, Call, Assignment, ImportLike, ObjectLiteral)


@dataclass(frozen=True)
class SyntaxTree:
    path: str
    nodes: tuple[Node, ...] = ()
    text: str = field(default="", repr=False)
    ok: bool = True
    error: str | None = None

    def __iter__(self) -> Iterator[Node]:
        return iter(self.nodes)

    def of(self, cls) -> list:
        return [n for n in self.nodes if isinstance(n, cls)]

    def counts(self) -> dict[str, int]:
        out = {c.__name__: 0 for c in COUNTED_CLASSES}
        for n in self.nodes:
            name = type(n).__name__
            if name in out:
                out[name] += 1
        return out

    @cached_property
    def lines(self) -> list[str]:
        # Rows are counted on "\n" only, matching the parser's positions.
        return [ln[:-1] if ln.endswith("\r") else ln for ln in self.text.split("\n")]

    def line_text(self, line: int) -> str:
        return self.lines[line - 1] if 0 < line <= len(self.lines) else ""


# --------------------------------------------------------------------------
# helpers used by the rule engine


def member_chain(node: Node) -> tuple[Node, tuple[str | None, ...]]:
    """Split ``a.b.c`` into (root ``a``, ("b", "c"))."""
    props: list[str | None] = []
    while isinstance(node, MemberAccess):
        props.append(node.prop)
        node = node.object
    props.reverse()
    return node, tuple(props)


def literal_truthy(node: Node | None) -> bool:
    if isinstance(node, Literal):
        return bool(node.value)
    if isinstance(node, StringLiteral):
        return bool(node.value) if node.complete else any(node.fragments)
    return False


REQUIRE_WRAPPERS = frozenset(
    {
        "__importStar",
        "__importDefault",
        "__toESM",
        "__toCommonJS",
        "_interopRequireWildcard",
        "_interopRequireDefault",
        "_interopNamespace",
        "_interopNamespaceDefault",
    }
)


def required_module(node: Node) -> str | None:
    """Module name if ``node`` is ``require('m')`` or an interop wrapper around it."""
    if isinstance(node, Call) and not node.new and isinstance(node.callee, Identifier) and node.args:
        arg = node.args[0]
        if node.callee.name == "require" and isinstance(arg, StringLiteral) and arg.complete:
            return arg.value
        if node.callee.name in REQUIRE_WRAPPERS:
            return required_module(arg)
    return None


# --------------------------------------------------------------------------
# lowering


@lru_cache(maxsize=1)
def _language() -> Language:
    return Language(tree_sitter_javascript.language())


def _parser() -> Parser:
    return Parser(_language())


_ESCAPES = {"n": "\n", "r": "\r", "t": "\t", "b": "\b", "f": "\f", "v": "\v", "0": "\0"}
_ESCAPE_RE = re.compile(r"\\(u\{[0-9a-fA-F]+\}|u[0-9a-fA-F]{4}|x[0-9a-fA-F]{2}|\r\n|.)", re.S)


def _unescape_one(m: re.Match) -> str:
    s = m.group(1)
    if s in ("\n", "\r\n", "\r", "\u2028", "\u2029"):
        return ""
    if s[0] == "u":
        code = int(s[2:-1] if s.startswith("u{") else s[1:], 16)
        return chr(code) if code <= 0x10FFFF else "\ufffd"
    if s[0] == "x":
        return chr(int(s[1:], 16))
    return _ESCAPES.get(s, s)


def unescape(seq: str) -> str:
    return _ESCAPE_RE.sub(_unescape_one, seq)


_SKIP = frozenset({"comment", "html_comment"})
_STRING_WRAPPERS = frozenset({"pair", "pair_pattern"})


class _Lowerer:
    def __init__(self, source: bytes):
        self.source = source
        self.ascii = source.isascii()
        self.line_starts = [0]
        for i, b in enumerate(source):
            if b == 10:
                self.line_starts.append(i + 1)
        self.out: dict[int, Node] = {}  # ts node id -> lowered expression
        self.registry: list[Node] = []
        self.consumed: set[int] = set()  # python ids of nodes folded into a parent
        self.imports: dict[int, int] = {}  # python id of require Call -> registry index

    def pos(self, ts) -> Pos:
        row, col = ts.start_point
        if not self.ascii:
            start = self.line_starts[row]
            col = len(self.source[start : start + col].decode("utf-8", "replace"))
        return Pos(row + 1, col)

    def text(self, ts) -> str:
        return self.source[ts.start_byte : ts.end_byte].decode("utf-8", "replace")

    def get(self, ts) -> Node:
        if ts is None:
            return Unknown(Pos(0, 0))
        node = self.out.get(ts.id)
        return node if node is not None else Unknown(self.pos(ts))

    def register(self, node: Node) -> Node:
        self.registry.append(node)
        return node

    # -- traversal

    def run(self, root) -> tuple[Node, ...]:
        stack = [(root, False)]
        while stack:
            ts, done = stack.pop()
            if done:
                node = self.lower(ts)
                if node is not None:
                    self.out[ts.id] = node
                continue
            stack.append((ts, True))
            for child in reversed(ts.children):
                if child.type not in _SKIP:
                    stack.append((child, False))
        kept = [n for n in self.registry if id(n) not in self.consumed]
        kept.sort(key=lambda n: (n.pos.line, n.pos.column))
        return tuple(kept)

    # -- per node type

    def lower(self, ts) -> Node | None:
        method = getattr(self, "_" + ts.type, None)
        return method(ts) if method is not None else None

    def _identifier(self, ts):
        return self.register(Identifier(self.text(ts), self.pos(ts)))

    _shorthand_property_identifier = _identifier
    _shorthand_property_identifier_pattern = _identifier

    def _undefined(self, ts):
        return self.register(Identifier("undefined", self.pos(ts)))

    def _number(self, ts):
        raw = self.text(ts).replace("_", "").rstrip("n")
        try:
            value: float | int = int(raw, 0)
        except ValueError:
            try:
                value = float(raw)
            except ValueError:
                value = float("nan")
        return Literal(value, self.pos(ts))

    def _true(self, ts):
        return Literal(True, self.pos(ts))

    def _false(self, ts):
        return Literal(False, self.pos(ts))

    def _null(self, ts):
        return Literal(None, self.pos(ts))

    def _string_text(self, ts) -> str:
        pieces = []
        for c in ts.children:
            if c.type == "string_fragment":
                pieces.append(self.text(c))
            elif c.type == "escape_sequence":
                pieces.append(unescape(self.text(c)))
        return "".join(pieces)

    def _string(self, ts):
        node = StringLiteral((self._string_text(ts),), self.pos(ts))
        parent = ts.parent
        if parent is not None:
            if parent.type in _STRING_WRAPPERS:
                key = parent.child_by_field_name("key")
                if key is not None and key.id == ts.id:
                    return node
            if parent.type in ("import_statement", "export_statement"):
                return node
        return self.register(node)

    def _template_string(self, ts):
        parts: list[str | None] = []
        buf: list[str] = []
        for c in ts.children:
            if c.type == "string_fragment":
                buf.append(self.text(c))
            elif c.type == "escape_sequence":
                buf.append(unescape(self.text(c)))
            elif c.type == "template_substitution":
                parts.append("".join(buf))
                parts.append(None)
                buf = []
        parts.append("".join(buf))
        return self.register(StringLiteral(_squash(parts), self.pos(ts)))

    def _parenthesized_expression(self, ts):
        inner = [c for c in ts.named_children if c.type not in _SKIP]
        return self.get(inner[-1]) if inner else None

    def _sequence_expression(self, ts):
        inner = [c for c in ts.named_children if c.type not in _SKIP]
        return self.get(inner[-1]) if inner else None

    def _unary_expression(self, ts):
        op = ts.child_by_field_name("operator")
        arg = self.get(ts.child_by_field_name("argument"))
        op = op.type if op is not None else ""
        if isinstance(arg, Literal):
            if op == "!":
                return Literal(not arg.value, self.pos(ts))
            if op == "-" and isinstance(arg.value, (int, float)) and not isinstance(arg.value, bool):
                return Literal(-arg.value, self.pos(ts))
            if op == "+":
                return arg
        if op == "void":
            return Literal(None, self.pos(ts))
        if op == "!" and isinstance(arg, StringLiteral) and arg.complete:
            return Literal(not arg.value, self.pos(ts))
        return Unknown(self.pos(ts))

    def _binary_expression(self, ts):
        op = ts.child_by_field_name("operator")
        if op is None or op.type != "+":
            return Unknown(self.pos(ts))
        left = self.get(ts.child_by_field_name("left"))
        right = self.get(ts.child_by_field_name("right"))
        if not isinstance(left, StringLiteral) and not isinstance(right, StringLiteral):
            return Unknown(self.pos(ts))
        for side in (left, right):
            if isinstance(side, StringLiteral):
                self.consumed.add(id(side))
        parts = _as_parts(left) + _as_parts(right)
        return self.register(StringLiteral(_squash(parts), self.pos(ts)))

    def _member_expression(self, ts):
        obj = self.get(ts.child_by_field_name("object"))
        prop = ts.child_by_field_name("property")
        name = self.text(prop) if prop is not None else None
        return self.register(MemberAccess(obj, name, self.pos(ts)))

    def _subscript_expression(self, ts):
        obj = self.get(ts.child_by_field_name("object"))
        index = self.get(ts.child_by_field_name("index"))
        key = None
        if isinstance(index, StringLiteral) and index.complete:
            key = index.value
        elif isinstance(index, Literal) and isinstance(index.value, int) and not isinstance(index.value, bool):
            key = str(index.value)
        return self.register(MemberAccess(obj, key, self.pos(ts)))

    def _arguments(self, ts):
        return None

    def _args(self, ts) -> tuple[Node, ...]:
        if ts is None:
            return ()
        if ts.type == "template_string":
            return (self.get(ts),)
        return tuple(self.get(c) for c in ts.named_children if c.type not in _SKIP)

    def _call_expression(self, ts):
        fn = ts.child_by_field_name("function")
        args = self._args(ts.child_by_field_name("arguments"))
        pos = self.pos(ts)
        if fn is not None and fn.type == "import":
            call = self.register(Call(Identifier("import", self.pos(fn)), args, pos))
            if args and isinstance(args[0], StringLiteral) and args[0].complete:
                self.register(ImportLike(args[0].value, (), pos))
            return call
        call = self.register(Call(self.get(fn), args, pos))
        if isinstance(call.callee, Identifier) and call.callee.name == "require":
            if args and isinstance(args[0], StringLiteral) and args[0].complete:
                self.imports[id(call)] = len(self.registry)
                self.register(ImportLike(args[0].value, (), pos))
        return call

    def _new_expression(self, ts):
        ctor = self.get(ts.child_by_field_name("constructor"))
        args = self._args(ts.child_by_field_name("arguments"))
        return self.register(Call(ctor, args, self.pos(ts), new=True))

    def _bind_require(self, value: Node, target: Node) -> None:
        call = value
        while isinstance(call, Call) and isinstance(call.callee, Identifier) and call.callee.name in REQUIRE_WRAPPERS:
            if not call.args:
                return
            call = call.args[0]
        index = self.imports.get(id(call))
        if index is None:
            return
        imp = self.registry[index]
        if isinstance(target, Identifier):
            bindings = (("*", target.name),)
        elif isinstance(target, ObjectPattern):
            bindings = target.bindings
        else:
            return
        self.registry[index] = replace(imp, bindings=imp.bindings + bindings)  # type: ignore[arg-type]

    def _assignment_expression(self, ts):
        target = self.get(ts.child_by_field_name("left"))
        value = self.get(ts.child_by_field_name("right"))
        self._bind_require(value, target)
        return self.register(Assignment(target, value, self.pos(ts)))

    def _augmented_assignment_expression(self, ts):
        target = self.get(ts.child_by_field_name("left"))
        value = self.get(ts.child_by_field_name("right"))
        op = ts.child_by_field_name("operator")
        return self.register(Assignment(target, value, self.pos(ts), op.type if op is not None else "?="))

    def _variable_declarator(self, ts):
        value_ts = ts.child_by_field_name("value")
        if value_ts is None:
            return None
        target = self.get(ts.child_by_field_name("name"))
        value = self.get(value_ts)
        self._bind_require(value, target)
        return self.register(Assignment(target, value, self.pos(ts), declaration=True))

    def _object(self, ts):
        entries: list[tuple[str | None, Node]] = []
        for c in ts.named_children:
            if c.type == "pair":
                entries.append((self._key(c.child_by_field_name("key")), self.get(c.child_by_field_name("value"))))
            elif c.type == "shorthand_property_identifier":
                entries.append((self.text(c), self.get(c)))
            elif c.type == "method_definition":
                entries.append((self._key(c.child_by_field_name("name")), Unknown(self.pos(c))))
            elif c.type not in _SKIP:
                entries.append((None, Unknown(self.pos(c))))
        return self.register(ObjectLiteral(tuple(entries), self.pos(ts)))

    def _key(self, ts) -> str | None:
        if ts is None:
            return None
        if ts.type in ("property_identifier", "private_property_identifier", "identifier"):
            return self.text(ts)
        if ts.type == "string":
            return self._string_text(ts)
        if ts.type == "number":
            return self.text(ts)
        if ts.type == "computed_property_name":
            inner = [c for c in ts.named_children if c.type not in _SKIP]
            if inner:
                node = self.get(inner[0])
                if isinstance(node, StringLiteral) and node.complete:
                    return node.value
        return None

    def _object_pattern(self, ts):
        bindings: list[tuple[str, str]] = []
        for c in ts.named_children:
            if c.type == "shorthand_property_identifier_pattern":
                bindings.append((self.text(c), self.text(c)))
            elif c.type == "object_assignment_pattern":
                left = c.child_by_field_name("left")
                if left is not None and left.type == "shorthand_property_identifier_pattern":
                    bindings.append((self.text(left), self.text(left)))
            elif c.type == "pair_pattern":
                key = self._key(c.child_by_field_name("key"))
                value = c.child_by_field_name("value")
                if value is not None and value.type == "assignment_pattern":
                    value = value.child_by_field_name("left")
                if key is not None and value is not None and value.type == "identifier":
                    bindings.append((key, self.text(value)))
        return ObjectPattern(tuple(bindings), self.pos(ts))

    def _import_statement(self, ts):
        source = ts.child_by_field_name("source")
        if source is None:
            return None
        module = self._string_text(source)
        bindings: list[tuple[str, str]] = []
        for clause in ts.named_children:
            if clause.type != "import_clause":
                continue
            for c in clause.named_children:
                if c.type == "identifier":
                    bindings.append(("default", self.text(c)))
                elif c.type == "namespace_import":
                    ids = [x for x in c.named_children if x.type == "identifier"]
                    if ids:
                        bindings.append(("*", self.text(ids[-1])))
                elif c.type == "named_imports":
                    for spec in c.named_children:
                        if spec.type != "import_specifier":
                            continue
                        name = spec.child_by_field_name("name")
                        alias = spec.child_by_field_name("alias")
                        if name is None:
                            continue
                        imported = self._key(name) or self.text(name)
                        local = self.text(alias) if alias is not None else imported
                        bindings.append((imported, local))
        return self.register(ImportLike(module, tuple(bindings), self.pos(ts)))


def _as_parts(node: Node) -> list[str | None]:
    if isinstance(node, StringLiteral):
        return list(node.parts)
    if isinstance(node, Literal):
        if isinstance(node.value, bool):
            return ["true" if node.value else "false"]
        if node.value is None:
            return ["null"]
        if isinstance(node.value, float) and node.value.is_integer():
            return [str(int(node.value))]
        return [str(node.value)]
    return [None]


def _squash(parts: list[str | None]) -> tuple[str | None, ...]:
    out: list[str | None] = []
    for p in parts:
        if p is None:
            if not out or out[-1] is not None:
                out.append(None)
        elif out and out[-1] is not None:
            out[-1] = out[-1] + p  # type: ignore[operator]
        else:
            out.append(p)
    if not out:
        out.append("")
    return tuple(out)


def parse_text(path: str, text: str) -> SyntaxTree:
    """Parse already-decoded source text into a normalized tree."""
    data = text.encode("utf-8")
    tree = _parser().parse(data)
    root = tree.root_node
    if root.has_error:
        return SyntaxTree(path, (), text, ok=False, error=_first_error(root))
    nodes = _Lowerer(data).run(root)
    return SyntaxTree(path, nodes, text)


def _first_error(root) -> str:
    stack = [root]
    while stack:
        n = stack.pop()
        if n.type == "ERROR" or n.is_missing:
            row, col = n.start_point
            what = "missing token" if n.is_missing else "syntax error"
            return f"{what} at line {row + 1}, column {col}"
        if n.has_error:
            stack.extend(reversed(n.children))
    return "syntax error"
