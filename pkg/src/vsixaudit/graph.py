"""Corpus-wide silent-install graph.

Edges come from three install mechanisms: manifest ``extensionPack``,
manifest ``extensionDependencies`` and ``installExtension`` command calls
with a literal target. Targets missing from the corpus stay in the graph as
stub nodes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .errors import UnknownNode
from .model import ExtensionIdentity, Finding, Location, make_finding, sort_findings

DEFAULT_CHAIN_CAP = 1_000_000
EDGE_HEADER = "# vsixaudit-edges v1"

_ID_RE = re.compile(r"^[a-z0-9][a-z0-9_-]*\.[a-z0-9][a-z0-9._-]*$")


class Mechanism(str, Enum):
    EXTENSION_PACK = "extensionPack"
    EXTENSION_DEPENDENCIES = "extensionDependencies"
    INSTALL_COMMAND = "installExtension-command"


@dataclass(frozen=True, order=True)
class InstallEdge:
    src: str
    dst: str
    mechanism: Mechanism


@dataclass
class NodeAttrs:
    present_in_corpus: bool = False
    has_network: bool = False
    vt_malicious: bool = False
    has_cve: bool = False


@dataclass(frozen=True)
class GraphInput:
    """What the graph needs from one scanned extension."""

    identity: ExtensionIdentity
    extension_pack: tuple[str, ...] = ()
    extension_dependencies: tuple[str, ...] = ()
    install_targets: tuple[str, ...] = ()
    has_network: bool = False
    vt_malicious: bool = False
    has_cve: bool = False

    @classmethod
    def from_results(cls, manifest, findings: Iterable[Finding], vt_malicious: bool = False) -> GraphInput:
        findings = list(findings)
        targets = tuple(
            f.metadata["target"]
            for f in findings
            if f.rule_id == "SRC-SILENT-INSTALL" and isinstance(f.metadata.get("target"), str)
        )
        return cls(
            identity=manifest.identity,
            extension_pack=tuple(manifest.extension_pack),
            extension_dependencies=tuple(manifest.extension_dependencies),
            install_targets=targets,
            has_network=any(f.rule_id in ("SRC-NET-CALL", "MAN-NET-DEP") for f in findings),
            vt_malicious=vt_malicious,
            has_cve=any(f.rule_id == "DEP-CVE" for f in findings),
        )

    @classmethod
    def from_findings(cls, identity: ExtensionIdentity, findings: Iterable[Finding], vt_malicious: bool = False) -> GraphInput:
        """Rebuild graph input from a finished report; install targets ride in finding metadata."""
        findings = list(findings)

        def targets(rule_id: str) -> tuple[str, ...]:
            out: list[str] = []
            for f in findings:
                if f.rule_id == rule_id:
                    out.extend(t for t in f.metadata.get("targets", ()) if isinstance(t, str))
            return tuple(out)

        installs = tuple(
            f.metadata["target"]
            for f in findings
            if f.rule_id == "SRC-SILENT-INSTALL" and isinstance(f.metadata.get("target"), str)
        )
        return cls(
            identity=identity,
            extension_pack=targets("MAN-PACK-INSTALL"),
            extension_dependencies=targets("MAN-DEP-INSTALL"),
            install_targets=installs,
            has_network=any(f.rule_id in ("SRC-NET-CALL", "MAN-NET-DEP") for f in findings),
            vt_malicious=vt_malicious,
            has_cve=any(f.rule_id == "DEP-CVE" for f in findings),
        )


@dataclass
class InstallGraph:
    nodes: dict[str, NodeAttrs] = field(default_factory=dict)
    edges: frozenset[InstallEdge] = frozenset()
    findings: list[Finding] = field(default_factory=list)

    def __post_init__(self) -> None:
        succ: dict[str, set[str]] = {n: set() for n in self.nodes}
        pred: dict[str, set[str]] = {n: set() for n in self.nodes}
        for e in self.edges:
            succ.setdefault(e.src, set()).add(e.dst)
            pred.setdefault(e.dst, set()).add(e.src)
            succ.setdefault(e.dst, set())
            pred.setdefault(e.src, set())
        self._succ = {k: tuple(sorted(v)) for k, v in succ.items()}
        self._pred = {k: frozenset(v) for k, v in pred.items()}

    def successors(self, node: str) -> tuple[str, ...]:
        return self._succ.get(node, ())

    def in_degree(self, node: str) -> int:
        return len(self._pred.get(node, ()))

    def out_degree(self, node: str) -> int:
        return len(self._succ.get(node, ()))

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str]], mechanism: Mechanism = Mechanism.EXTENSION_PACK) -> InstallGraph:
        es = frozenset(InstallEdge(a, b, mechanism) for a, b in edges)
        nodes = {n: NodeAttrs(present_in_corpus=True) for e in es for n in (e.src, e.dst)}
        return cls(nodes, es)


def normalize_target(raw: str) -> str | None:
    t = raw.strip().lower()
    return t if _ID_RE.match(t) else None


def build_graph(corpus: Iterable[GraphInput]) -> InstallGraph:
    items = sorted(corpus, key=lambda g: (g.identity.id, g.identity.version))
    nodes: dict[str, NodeAttrs] = {}
    edges: set[InstallEdge] = set()
    findings: list[Finding] = []

    for g in items:
        attrs = nodes.setdefault(g.identity.id, NodeAttrs())
        attrs.present_in_corpus = True
        attrs.has_network |= g.has_network
        attrs.vt_malicious |= g.vt_malicious
        attrs.has_cve |= g.has_cve

    for g in items:
        src = g.identity.id
        for mech, targets in (
            (Mechanism.EXTENSION_PACK, g.extension_pack),
            (Mechanism.EXTENSION_DEPENDENCIES, g.extension_dependencies),
            (Mechanism.INSTALL_COMMAND, g.install_targets),
        ):
            for raw in targets:
                dst = normalize_target(raw)
                if dst is None:
                    findings.append(
                        make_finding(
                            "GRAPH-BAD-TARGET", g.identity, f'{mech.value} target "{raw}" is not a publisher.name id',
                            Location("extension/package.json"), mechanism=mech.value, target=raw,
                        )
                    )
                    continue
                if dst == src:
                    findings.append(
                        make_finding(
                            "GRAPH-SELF-EDGE", g.identity, f'{mech.value} lists the extension itself ("{raw}")',
                            Location("extension/package.json"), mechanism=mech.value,
                        )
                    )
                    continue
                nodes.setdefault(dst, NodeAttrs())
                edges.add(InstallEdge(src, dst, mech))

    graph = InstallGraph(dict(sorted(nodes.items())), frozenset(edges), [])
    subjects = {g.identity.id: g.identity for g in items}
    for comp in strongly_connected_cycles(graph):
        who = subjects.get(comp[0]) or ExtensionIdentity(*comp[0].split(".", 1))
        findings.append(
            make_finding(
                "GRAPH-CYCLE", who, "install cycle among " + ", ".join(comp), None, members=list(comp),
            )
        )
    graph.findings = sort_findings(_dedupe(findings))
    return graph


def _dedupe(findings: list[Finding]) -> list[Finding]:
    seen, out = set(), []
    for f in findings:
        key = (f.rule_id, f.subject, f.evidence)
        if key not in seen:
            seen.add(key)
            out.append(f)
    return out


class ChainList(list):
    """Chains plus a truncation marker set when the path cap was hit."""

    truncated: bool = False

    @property
    def lower_bound(self) -> int:
        return len(self)


def chains(graph: InstallGraph, min_length: int = 3, cap: int = DEFAULT_CHAIN_CAP) -> ChainList:
    """All simple directed paths with at least ``min_length`` nodes, in lexicographic order.

    Depth-first search from sorted start nodes over sorted successors emits
    paths in lexicographic order directly.
    """
    out = ChainList()
    if min_length < 2:
        raise ValueError("min_length must be at least 2")
    for start in sorted(graph._succ):
        path = [start]
        on_path = {start}
        stack = [iter(graph.successors(start))]
        while stack:
            nxt = next(stack[-1], None)
            if nxt is None:
                stack.pop()
                on_path.discard(path.pop())
                continue
            if nxt in on_path:
                continue
            path.append(nxt)
            on_path.add(nxt)
            if len(path) >= min_length:
                if len(out) >= cap:
                    out.truncated = True
                    return out
                out.append(tuple(path))
            stack.append(iter(graph.successors(nxt)))
    return out


def strongly_connected_cycles(graph: InstallGraph) -> list[tuple[str, ...]]:
    """Node groups that lie on a directed cycle (Tarjan, iterative)."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    comps: list[tuple[str, ...]] = []
    counter = 0
    for root in sorted(graph._succ):
        if root in index:
            continue
        work = [(root, iter(graph.successors(root)))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            child = next(it, None)
            if child is not None:
                if child not in index:
                    index[child] = low[child] = counter
                    counter += 1
                    stack.append(child)
                    on_stack.add(child)
                    work.append((child, iter(graph.successors(child))))
                elif child in on_stack:
                    low[node] = min(low[node], index[child])
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == node:
                        break
                if len(comp) > 1:
                    comps.append(tuple(sorted(comp)))
    return sorted(comps)


def installed_by(graph: InstallGraph, ext_id: str) -> set[str]:
    if ext_id not in graph.nodes and ext_id not in graph._succ:
        raise UnknownNode(ext_id)
    return set(graph._pred.get(ext_id, ()))


@dataclass(frozen=True)
class CrossFlagReport:
    installed_targets_with_network: int = 0
    installed_targets_vt_positive: int = 0
    installed_targets_with_cve: int = 0
    installer_counts: int = 0
    installed_counts: int = 0
    chain_count: int = 0
    chain_extension_count: int = 0
    chains_truncated: bool = False
    by_mechanism: dict[str, tuple[int, int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["by_mechanism"] = {k: list(v) for k, v in sorted(self.by_mechanism.items())}
        return d


def cross_flags(graph: InstallGraph, cap: int = DEFAULT_CHAIN_CAP) -> CrossFlagReport:
    targets = [n for n in graph.nodes if graph.in_degree(n) >= 1]
    installers = [n for n in graph.nodes if graph.out_degree(n) >= 1]
    attrs = graph.nodes
    found = chains(graph, 3, cap)
    by_mech: dict[str, tuple[int, int]] = {}
    for mech in Mechanism:
        es = [e for e in graph.edges if e.mechanism is mech]
        by_mech[mech.value] = (len({e.src for e in es}), len({e.dst for e in es}))
    return CrossFlagReport(
        installed_targets_with_network=sum(attrs[n].has_network for n in targets),
        installed_targets_vt_positive=sum(attrs[n].vt_malicious for n in targets),
        installed_targets_with_cve=sum(attrs[n].has_cve for n in targets),
        installer_counts=len(installers),
        installed_counts=len(targets),
        chain_count=len(found),
        chain_extension_count=len({n for c in found for n in c}),
        chains_truncated=found.truncated,
        by_mechanism=by_mech,
    )


def export_edges(graph: InstallGraph) -> str:
    lines = [EDGE_HEADER]
    lines.extend(f"{e.src}\t{e.dst}\t{e.mechanism.value}" for e in sorted(graph.edges))
    return "\n".join(lines) + "\n"


def parse_edges(text: str) -> list[InstallEdge]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != EDGE_HEADER:
        raise ValueError(f"edge list must start with {EDGE_HEADER!r}")
    out = []
    for ln in lines[1:]:
        if not ln.strip():
            continue
        src, dst, mech = ln.split("\t")
        out.append(InstallEdge(src, dst, Mechanism(mech)))
    return out
