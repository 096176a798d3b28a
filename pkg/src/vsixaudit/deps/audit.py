from __future__ import annotations

from ..errors import RangeUnparseable, VersionUnparseable
from ..model import Finding, Location, Severity, make_finding, sort_findings
from ..package import ExtensionManifest, PackageInventory
from .semver import parse_range, parse_version, ranges_intersect
from .vulndb import VulnDatabase


def audit(manifest: ExtensionManifest, inventory: PackageInventory, db: VulnDatabase) -> list[Finding]:
    """DEP-CVE findings for declared ranges (by intersection) and bundled modules (by exact version)."""
    who = manifest.identity
    out: list[Finding] = []

    for name, spec in sorted(manifest.dependencies.items()):
        records = db.for_package(name)
        if not records:
            continue
        try:
            declared = parse_range(spec)
        except RangeUnparseable:
            out.append(
                make_finding(
                    "DEP-RANGE-UNPARSEABLE", who, f'dependency "{name}": "{spec}" is not a version range',
                    Location(manifest.path), package=name, declared=spec,
                )
            )
            continue
        for rec in records:
            if ranges_intersect(declared, rec.range):
                out.append(_finding(manifest, rec, spec, Location(manifest.path), "manifest"))

    for mod in inventory.bundled_modules:
        records = db.for_package(mod.name)
        if not records:
            continue
        try:
            version = parse_version(mod.version)
        except VersionUnparseable:
            out.append(
                make_finding(
                    "DEP-RANGE-UNPARSEABLE", who, f'bundled "{mod.name}" has version "{mod.version}"',
                    Location(mod.path), package=mod.name, declared=mod.version,
                )
            )
            continue
        for rec in records:
            if version in rec.range:
                out.append(_finding(manifest, rec, mod.version, Location(mod.path), "bundled"))
    return sort_findings(out)


def _finding(manifest: ExtensionManifest, rec, declared: str, loc: Location, source: str) -> Finding:
    return make_finding(
        "DEP-CVE",
        manifest.identity,
        f'{rec.cve_id}: "{rec.package}" {declared} matches affected range "{rec.affected_range}"',
        loc,
        Severity(rec.severity),
        cve_id=rec.cve_id,
        package=rec.package,
        declared=declared,
        affected_range=rec.affected_range,
        source=source,
        summary=rec.summary,
    )
