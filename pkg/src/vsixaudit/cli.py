"""Command-line entry point.

Exit codes: 0 nothing suspicious, 1 suspicious, 2 high-risk, 3 operational error.
"""

from __future__ import annotations

import argparse
import csv
import io
import ipaddress
import json
import logging
import re
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .deps.vulndb import EMPTY_DB, VulnDatabase, bundled_db_path, load_vuln_db
from .errors import ScanError
from .graph import EDGE_HEADER, GraphInput, InstallGraph, NodeAttrs, build_graph, chains, cross_flags, parse_edges
from .intel import FixtureBackend, HttpJsonBackend, IntelClient, classify, load_allowlist, make_indicator
from .marketplace.client import MarketplaceClient, crawl
from .marketplace.profile import load_profile
from .marketplace.store import PackageStore
from .pipeline import CorpusItem, scan_corpus, store_items
from .policy import DEFAULT_POLICY, Policy, load_policy
from .ratelimit import RateLimiter
from .report import FORMATS, SCHEMA_VERSION, emit

log = logging.getLogger("vsixaudit")

EXIT_OPERATIONAL = 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--policy", type=Path, help="policy file (INI) overriding watchlists, thresholds and weights")
    p.add_argument(
        "--vuln-db", metavar="PATH", help='vulnerability database (JSONL); "bundled" uses the shipped fixture'
    )
    p.add_argument("--format", choices=FORMATS, default="text", help="output format (default: text)")
    p.add_argument("--out", type=Path, help="write output here instead of stdout")


def _intel_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("threat intelligence")
    g.add_argument("--intel-fixture", type=Path, help="offline verdict table (JSON)")
    g.add_argument("--intel-url", help="HTTP backend URL template with {kind} and {value}")
    g.add_argument("--intel-key-env", help="environment variable holding the HTTP backend API key")
    g.add_argument("--intel-rate", type=float, default=4.0, help="intel requests per second (default: 4)")
    g.add_argument("--cache-dir", type=Path, help="verdict cache directory")
    g.add_argument("--allowlist", type=Path, help="registrable domains never looked up, one per line")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vsixaudit", description="Static security scanner for .vsix packages.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="scan one or more .vsix files")
    p.add_argument("packages", nargs="+", type=Path)
    _common(p)
    _intel_flags(p)

    p = sub.add_parser("corpus", help="scan every package in a store or directory and summarize")
    p.add_argument("store", type=Path)
    p.add_argument("--workers", type=int, default=1, help="worker processes (default: 1)")
    _common(p)
    _intel_flags(p)

    p = sub.add_parser("crawl", help="download listed extensions into a package store")
    p.add_argument("--endpoint-profile", default="gallery", help='profile name ("fixture", "gallery") or JSON path')
    p.add_argument("--base-url", required=True, help="gallery base URL")
    p.add_argument("--since", help="only listings updated at or after this ISO-8601 timestamp")
    p.add_argument("--out-store", type=Path, required=True, help="package store directory")
    p.add_argument("--rate", type=float, default=5.0, help="requests per second (default: 5)")
    p.add_argument("--workers", type=int, default=4, help="parallel downloads (default: 4)")
    p.add_argument("--page-size", type=int, default=100)
    p.add_argument("--limit", type=int, help="stop after this many new downloads")
    _common(p)

    p = sub.add_parser("chains", help="install chains across a corpus")
    p.add_argument("store", type=Path, help="package store, directory of .vsix files, or exported edge list")
    p.add_argument("--min-length", type=int, default=3, help="minimum chain length in nodes (default: 3)")
    p.add_argument("--workers", type=int, default=1)
    _common(p)

    p = sub.add_parser("intel", help="look up one indicator")
    p.add_argument("indicator", help="KIND:VALUE, or a bare hash, IP, URL or domain")
    _common(p)
    _intel_flags(p)
    return ap


# --------------------------------------------------------------------------
# helpers


def _policy(args: argparse.Namespace) -> Policy:
    return load_policy(args.policy) if args.policy else DEFAULT_POLICY


def _db(args: argparse.Namespace) -> VulnDatabase:
    if not args.vuln_db:
        return EMPTY_DB
    return load_vuln_db(bundled_db_path() if args.vuln_db == "bundled" else args.vuln_db)


def _intel(args: argparse.Namespace) -> IntelClient | None:
    if args.intel_fixture:
        backend: Any = FixtureBackend.from_file(args.intel_fixture)
    elif args.intel_url:
        backend = HttpJsonBackend(args.intel_url, auth_env=args.intel_key_env)
    else:
        return None
    return IntelClient(backend, args.cache_dir, limiter=RateLimiter.per_second(args.intel_rate))


def _write(args: argparse.Namespace, data: bytes) -> None:
    if args.out:
        args.out.write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def _csv(rows: list[list[Any]]) -> bytes:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue().encode("utf-8")


def _json(doc: dict[str, Any]) -> bytes:
    return (json.dumps({"schema_version": SCHEMA_VERSION, **doc}, sort_keys=True, indent=2) + "\n").encode("utf-8")


_HEX64 = re.compile(r"^[0-9a-fA-F]{64}$")


def parse_indicator(text: str):
    kind, sep, value = text.partition(":")
    if sep and kind in ("file-hash", "domain", "ip", "url"):
        return make_indicator(kind, value)
    if _HEX64.match(text):
        return make_indicator("file-hash", text)
    if "://" in text:
        return make_indicator("url", text)
    try:
        ipaddress.ip_address(text.strip("[]"))
        return make_indicator("ip", text.strip("[]"))
    except ValueError:
        return make_indicator("domain", text)


# --------------------------------------------------------------------------
# commands


def cmd_scan(args: argparse.Namespace) -> int:
    items = [CorpusItem(str(p), p) for p in args.packages]
    allow = load_allowlist(args.allowlist) if args.allowlist else ()
    report = scan_corpus(items, _policy(args), _db(args), 1, _intel(args), allow, with_graph=False)
    for src, err in report.failures:
        log.error("%s: %s", src, err)
    if len(report.extensions) == 1 and not report.failures:
        _write(args, emit(report.extensions[0], args.format))
    else:
        _write(args, emit(report, args.format))
    return report.exit_code


def cmd_corpus(args: argparse.Namespace) -> int:
    if not args.store.is_dir():
        raise ScanError(f"{args.store} is not a directory")
    allow = load_allowlist(args.allowlist) if args.allowlist else ()
    items = store_items(args.store)
    log.info("scanning %d packages with %d worker(s)", len(items), args.workers)
    report = scan_corpus(items, _policy(args), _db(args), args.workers, _intel(args), allow)
    for src, err in report.failures:
        log.error("%s: %s", src, err)
    _write(args, emit(report, args.format))
    return report.exit_code


def cmd_crawl(args: argparse.Namespace) -> int:
    client = MarketplaceClient(
        load_profile(args.endpoint_profile), args.base_url, limiter=RateLimiter.per_second(args.rate)
    )
    store = PackageStore(args.out_store)
    stats = crawl(client, store, args.since, args.page_size, args.workers, args.limit)
    for msg in stats.failed:
        log.error("%s", msg)
    doc = {
        "kind": "crawl-stats",
        "listed": stats.listed,
        "downloaded": stats.downloaded,
        "already_stored": stats.cache_hits,
        "failed": stats.failed,
        "requests": client.requests_made,
    }
    if args.format == "structured":
        out = _json(doc)
    elif args.format == "table":
        out = _csv([["listed", "downloaded", "already_stored", "failed"],
                    [stats.listed, stats.downloaded, stats.cache_hits, len(stats.failed)]])
    else:
        out = (
            f"listed {stats.listed}, downloaded {stats.downloaded}, already stored {stats.cache_hits}, "
            f"failed {len(stats.failed)}\n"
        ).encode()
    _write(args, out)
    return EXIT_OPERATIONAL if stats.failed else 0


def _load_graph(args: argparse.Namespace) -> InstallGraph:
    path: Path = args.store
    if path.is_file():
        text = path.read_text(encoding="utf-8")
        if not text.startswith(EDGE_HEADER):
            raise ScanError(f"{path} is neither a directory nor an edge list")
        edges = frozenset(parse_edges(text))
        nodes = {n: NodeAttrs(present_in_corpus=True) for e in edges for n in (e.src, e.dst)}
        return InstallGraph(nodes, edges)
    report = scan_corpus(store_items(path), _policy(args), _db(args), args.workers, with_graph=False)
    for src, err in report.failures:
        log.error("%s: %s", src, err)
    return build_graph(GraphInput.from_findings(r.identity, r.all_findings) for r in report.extensions)


def cmd_chains(args: argparse.Namespace) -> int:
    graph = _load_graph(args)
    found = chains(graph, args.min_length)
    flags = cross_flags(graph)
    if args.format == "structured":
        out = _json(
            {
                "kind": "install-chains",
                "chains": [list(c) for c in found],
                "truncated": found.truncated,
                "cross_flags": flags.to_dict(),
                "findings": [f.to_dict() for f in graph.findings],
            }
        )
    elif args.format == "table":
        out = _csv([["length", "chain"]] + [[len(c), " -> ".join(c)] for c in found])
    else:
        lines = [" -> ".join(c) for c in found]
        lines.append(f"{len(found)} chain(s) over {flags.chain_extension_count} extension(s)"
                     + (" (truncated)" if found.truncated else ""))
        lines.extend(f"{f.rule_id}: {f.evidence}" for f in graph.findings)
        out = ("\n".join(lines) + "\n").encode()
    _write(args, out)
    return 0


def cmd_intel(args: argparse.Namespace) -> int:
    client = _intel(args)
    if client is None:
        raise ScanError("intel needs --intel-fixture or --intel-url")
    ind = parse_indicator(args.indicator)
    threshold = _policy(args).intel_threshold
    verdict = client.lookup(ind)
    cls = classify(verdict, threshold)
    if args.format == "structured":
        out = _json({"kind": "intel-verdict", "verdict": verdict.to_dict(), "class": cls.value, "threshold": threshold})
    elif args.format == "table":
        out = _csv([["kind", "value", "engines_total", "engines_positive", "class"],
                    [ind.kind.value, ind.value, verdict.engines_total, verdict.engines_positive, cls.value]])
    else:
        out = (f"{ind.kind.value}:{ind.value}  {verdict.engines_positive}/{verdict.engines_total} engines"
               f"  {cls.value} (threshold {threshold}, backend {verdict.backend})\n").encode()
    _write(args, out)
    return {"clean": 0, "flagged": 1, "malicious": 2}[cls.value]


COMMANDS = {"scan": cmd_scan, "corpus": cmd_corpus, "crawl": cmd_crawl, "chains": cmd_chains, "intel": cmd_intel}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="vsixaudit: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ScanError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_OPERATIONAL


if __name__ == "__main__":
    sys.exit(main())
