"""End-to-end scanning: package bytes in, :class:`ExtensionReport` out.

The static stages are pure and run in worker processes when asked. Intel
lookups happen afterwards in the calling process, so one client (and its
cache and rate limiter) serves the whole corpus.
"""

from __future__ import annotations

import ipaddress
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .deps.audit import audit
from .deps.vulndb import EMPTY_DB, VulnDatabase
from .errors import IndicatorInvalid, IntelError, ScanError
from .graph import GraphInput, build_graph, cross_flags, export_edges
from .intel import IntelClient, IndicatorKind, classify, filter_indicators, make_indicator
from .manifest import analyze_inventory, analyze_manifest
from .marketplace.store import LEDGER, PackageStore
from .package import read_package
from .policy import DEFAULT_POLICY, Policy
from .report import CorpusReport, ExtensionReport, build_corpus_report, build_report
from .source.rules import RuleSet
from .source.scan import scan_extension


@dataclass(frozen=True)
class StaticResult:
    report: ExtensionReport
    hosts: tuple[str, ...] = ()


def scan_bytes(
    data: bytes,
    policy: Policy = DEFAULT_POLICY,
    db: VulnDatabase = EMPTY_DB,
    install_count: int | None = None,
    rules: RuleSet | None = None,
) -> StaticResult:
    """Read, analyze, scan and audit one package. Raises PackageError on unreadable input."""
    pkg = read_package(data)
    rules = rules or RuleSet.from_policy(policy)
    findings = list(pkg.findings)
    findings += analyze_manifest(pkg.manifest, policy)
    findings += analyze_inventory(pkg.inventory, policy.sizes, pkg.identity, policy)
    src = scan_extension(pkg, rules)
    findings += src.findings
    deps = audit(pkg.manifest, pkg.inventory, db)
    report = build_report(
        pkg.identity, findings, deps, policy=policy, package_sha256=pkg.package_sha256, install_count=install_count
    )
    return StaticResult(report, src.hosts)


def apply_intel(
    result: StaticResult,
    client: IntelClient,
    allowlist: Iterable[str] = (),
    policy: Policy = DEFAULT_POLICY,
) -> ExtensionReport:
    """Look up the package hash and its URL hosts; rescore with the verdicts.

    Lookups that fail are recorded as ``unavailable`` rather than aborting the scan.
    """
    r = result.report
    wanted = [(IndicatorKind.FILE_HASH, r.package_sha256)] if r.package_sha256 else []
    for host in filter_indicators(result.hosts, allowlist):
        try:
            ipaddress.ip_address(host.strip("[]"))
            wanted.append((IndicatorKind.IP, host.strip("[]")))
        except ValueError:
            wanted.append((IndicatorKind.DOMAIN, host))
    intel: dict[str, str] = {}
    for kind, value in wanted:
        try:
            ind = make_indicator(kind, value)
        except IndicatorInvalid:
            continue
        key = f"{ind.kind.value}:{ind.value}"
        try:
            intel[key] = classify(client.lookup(ind), policy.intel_threshold).value
        except IntelError:
            intel[key] = "unavailable"
    return build_report(
        r.identity, r.findings, r.dep_findings, intel, policy, r.package_sha256, r.install_count
    )


# --------------------------------------------------------------------------
# corpora


@dataclass(frozen=True)
class CorpusItem:
    label: str  # shown in failure messages
    path: Path
    install_count: int | None = None


def store_items(root: str | Path) -> list[CorpusItem]:
    """Packages under ``root``: the crawl ledger when present, else every ``*.vsix`` file."""
    root = Path(root)
    if (root / LEDGER).exists():
        store = PackageStore(root)
        return [CorpusItem(f"{e.id}@{e.version}", p, e.install_count) for e, p in store.packages()]
    return [CorpusItem(str(p), p) for p in sorted(root.rglob("*.vsix"))]


def _scan_item(item: CorpusItem, policy: Policy, db: VulnDatabase) -> StaticResult | str:
    try:
        return scan_bytes(item.path.read_bytes(), policy, db, item.install_count)
    except (ScanError, OSError) as exc:
        return f"{type(exc).__name__}: {exc}"


def scan_items(
    items: Iterable[CorpusItem],
    policy: Policy = DEFAULT_POLICY,
    db: VulnDatabase = EMPTY_DB,
    workers: int = 1,
) -> tuple[list[StaticResult], list[tuple[str, str]]]:
    items = list(items)
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, os.cpu_count() or 1)) as pool:
            outs = list(pool.map(_scan_item, items, [policy] * len(items), [db] * len(items), chunksize=8))
    else:
        outs = [_scan_item(i, policy, db) for i in items]
    ok: list[StaticResult] = []
    failed: list[tuple[str, str]] = []
    for item, out in zip(items, outs):
        if isinstance(out, str):
            failed.append((item.label, out))
        else:
            ok.append(out)
    return ok, failed


def graph_summary(reports: Iterable[ExtensionReport]) -> dict:
    inputs = [
        GraphInput.from_findings(r.identity, r.all_findings, any(v == "malicious" for v in r.intel.values()))
        for r in reports
    ]
    graph = build_graph(inputs)
    flags = cross_flags(graph)
    return {
        **flags.to_dict(),
        "edges": export_edges(graph).splitlines()[1:],
        "findings": [f.to_dict() for f in graph.findings],
    }


def scan_corpus(
    items: Iterable[CorpusItem],
    policy: Policy = DEFAULT_POLICY,
    db: VulnDatabase = EMPTY_DB,
    workers: int = 1,
    intel: IntelClient | None = None,
    allowlist: Iterable[str] = (),
    with_graph: bool = True,
) -> CorpusReport:
    results, failed = scan_items(items, policy, db, workers)
    allow = tuple(allowlist)
    if intel is not None:
        reports = [apply_intel(r, intel, allow, policy) for r in results]
    else:
        reports = [r.report for r in results]
    graph = graph_summary(reports) if with_graph else None
    return build_corpus_report(reports, failed, install_graph=graph)
