"""Findings derivable from the manifest and file inventory alone."""

from __future__ import annotations

from .model import Finding, Location, make_finding, sort_findings
from .package import EntryKind, ExtensionManifest, PackageInventory, WorkspaceTrust
from .policy import DEFAULT_POLICY, Policy, SizePolicy


def analyze_manifest(manifest: ExtensionManifest, policy: Policy = DEFAULT_POLICY) -> list[Finding]:
    who = manifest.identity
    loc = Location(manifest.path)
    sev = policy.severity_for
    out: list[Finding] = []

    if manifest.extension_pack:
        ids = ", ".join(manifest.extension_pack)
        out.append(
            make_finding(
                "MAN-PACK-INSTALL", who, f'extensionPack installs [{ids}]', loc,
                sev("MAN-PACK-INSTALL"), targets=list(manifest.extension_pack),
            )
        )
    if manifest.extension_dependencies:
        ids = ", ".join(manifest.extension_dependencies)
        out.append(
            make_finding(
                "MAN-DEP-INSTALL", who, f'extensionDependencies installs [{ids}]', loc,
                sev("MAN-DEP-INSTALL"), targets=list(manifest.extension_dependencies),
            )
        )
    if manifest.untrusted_workspaces is WorkspaceTrust.TRUE:
        out.append(
            make_finding(
                "MAN-UNTRUSTED-WS", who, 'capabilities.untrustedWorkspaces.supported is "true"', loc,
                sev("MAN-UNTRUSTED-WS"),
            )
        )
    elif manifest.untrusted_workspaces is WorkspaceTrust.LIMITED:
        out.append(
            make_finding(
                "MAN-UNTRUSTED-WS-LIMITED", who, 'capabilities.untrustedWorkspaces.supported is "limited"', loc,
                sev("MAN-UNTRUSTED-WS-LIMITED"),
            )
        )
    # Empty-string URLs count as missing.
    if not manifest.repository_url:
        out.append(make_finding("MAN-NO-REPO", who, "no repository.url in manifest", loc, sev("MAN-NO-REPO")))

    watch = set(policy.network_watchlist)
    for name, spec in manifest.dependencies.items():
        if name in watch:
            out.append(
                make_finding(
                    "MAN-NET-DEP", who, f'dependency "{name}": "{spec}"', loc, sev("MAN-NET-DEP"),
                    package=name, range=spec,
                )
            )
    return sort_findings(out)


def analyze_inventory(
    inventory: PackageInventory,
    thresholds: SizePolicy | None = None,
    subject=None,
    policy: Policy = DEFAULT_POLICY,
) -> list[Finding]:
    """Size and bundled-content findings.

    ``subject`` is the identity findings are attributed to; it is required
    whenever the inventory can produce a finding.
    """
    thresholds = thresholds or policy.sizes
    sev = policy.severity_for
    out: list[Finding] = []

    total = inventory.total_size
    if total > thresholds.max_total:
        out.append(
            make_finding(
                "MAN-OVERSIZED", subject, f"package unpacks to {total} bytes (limit {thresholds.max_total})",
                None, sev("MAN-OVERSIZED"), total_size=total, limit=thresholds.max_total,
            )
        )
    for entry in inventory.entries:
        if entry.kind in (EntryKind.NATIVE, EntryKind.ARCHIVE):
            out.append(
                make_finding(
                    "MAN-BUNDLED-BINARY", subject, f'bundled {entry.kind.value} "{entry.path}" ({entry.size} bytes)',
                    Location(entry.path), sev("MAN-BUNDLED-BINARY"), kind=entry.kind.value, sha256=entry.sha256,
                )
            )
    modules = inventory.by_kind(EntryKind.NODE_MODULE)
    module_bytes = sum(e.size for e in modules)
    if modules and module_bytes > thresholds.max_modules:
        out.append(
            make_finding(
                "MAN-BUNDLED-MODULES", subject,
                f"{len(modules)} node_modules files totalling {module_bytes} bytes (limit {thresholds.max_modules})",
                None, sev("MAN-BUNDLED-MODULES"), module_bytes=module_bytes, files=len(modules),
            )
        )
    return sort_findings(out)
