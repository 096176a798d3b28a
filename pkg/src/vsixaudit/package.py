"""Reading ``.vsix`` archives.

A VSIX is a ZIP container with the extension's ``package.json`` at
``extension/package.json`` and an ``extension.vsixmanifest`` XML descriptor at
the root. :func:`read_package` parses both, inventories every file entry and
hashes it, and never executes or extracts anything to disk.
"""

from __future__ import annotations

import hashlib
import io
import json
import posixpath
import re
import zipfile
import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Any
from xml.etree import ElementTree

from .errors import ManifestMissing, ManifestUnparseable, NotAZip, PathTraversal
from .model import ExtensionIdentity, Finding, Location, make_finding

MANIFEST_PATH = "extension/package.json"
VSIX_MANIFEST_PATH = "extension.vsixmanifest"
HASH_LIMIT = 64 * 1024 * 1024
HEAD_BYTES = 16
_CHUNK = 1 << 20

_ZIP_SIGNATURES = (b"PK\x03\x04", b"PK\x05\x06", b"PK\x07\x08")


class EntryKind(str, Enum):
    ECMASCRIPT = "ecmascript-source"
    MANIFEST = "manifest"
    NODE_MODULE = "node-module"
    NATIVE = "native-executable"
    ARCHIVE = "archive"
    MEDIA = "media"
    OTHER = "other"


class WorkspaceTrust(str, Enum):
    TRUE = "true"
    FALSE = "false"
    LIMITED = "limited"
    ABSENT = "absent"


_NATIVE_MAGIC = (
    b"MZ",
    b"\x7fELF",
    b"\xfe\xed\xfa\xce",
    b"\xfe\xed\xfa\xcf",
    b"\xce\xfa\xed\xfe",
    b"\xcf\xfa\xed\xfe",
    b"\xca\xfe\xba\xbe",  # fat Mach-O, also Java class files
)
_ARCHIVE_MAGIC = (b"PK\x03\x04", b"PK\x05\x06", b"\x1f\x8b", b"7z\xbc\xaf\x27\x1c", b"Rar!\x1a\x07", b"BZh")
_MEDIA_MAGIC = (b"\x89PNG\r\n\x1a\n", b"\xff\xd8\xff", b"GIF87a", b"GIF89a", b"wOFF", b"wOF2")

_NATIVE_SUFFIXES = (".exe", ".dll", ".so", ".dylib", ".node")
_ARCHIVE_SUFFIXES = (".jar", ".war", ".zip", ".tar.gz", ".tgz", ".tar", ".gz", ".7z", ".rar", ".vsix", ".bz2", ".xz")
_MEDIA_SUFFIXES = (
    ".png", ".jpg", ".jpeg", ".gif", ".svg", ".ico", ".webp", ".bmp",
    ".ttf", ".otf", ".woff", ".woff2", ".eot",
    ".mp3", ".mp4", ".wav", ".ogg", ".webm",
)
_JS_SUFFIXES = (".js", ".mjs", ".cjs")


def classify_entry(path: str, head_bytes: bytes, manifest_path: str = MANIFEST_PATH) -> EntryKind:
    """Assign an inventory kind. Magic bytes win over the file suffix."""
    lower = path.lower()
    if head_bytes.startswith(_NATIVE_MAGIC):
        return EntryKind.NATIVE
    if head_bytes.startswith(_ARCHIVE_MAGIC):
        return EntryKind.ARCHIVE
    if head_bytes.startswith(_MEDIA_MAGIC) or (head_bytes[:4] == b"RIFF" and head_bytes[8:12] == b"WEBP"):
        return EntryKind.MEDIA
    if path == manifest_path:
        return EntryKind.MANIFEST
    if lower.endswith(_NATIVE_SUFFIXES):
        return EntryKind.NATIVE
    if lower.endswith(_ARCHIVE_SUFFIXES):
        return EntryKind.ARCHIVE
    if "node_modules" in lower.split("/")[:-1]:
        return EntryKind.NODE_MODULE
    if lower.endswith(_JS_SUFFIXES):
        return EntryKind.ECMASCRIPT
    if lower.endswith(_MEDIA_SUFFIXES):
        return EntryKind.MEDIA
    return EntryKind.OTHER


@dataclass(frozen=True)
class InventoryEntry:
    path: str
    size: int
    kind: EntryKind
    sha256: str
    hash_truncated: bool = False
    readable: bool = True


@dataclass(frozen=True)
class BundledModule:
    """A package found under ``node_modules`` with its own manifest."""

    path: str
    name: str
    version: str


@dataclass(frozen=True)
class PackageInventory:
    entries: tuple[InventoryEntry, ...] = ()
    bundled_modules: tuple[BundledModule, ...] = ()

    @property
    def total_size(self) -> int:
        return sum(e.size for e in self.entries)

    def by_kind(self, kind: EntryKind) -> list[InventoryEntry]:
        return [e for e in self.entries if e.kind is kind]

    def get(self, path: str) -> InventoryEntry | None:
        for e in self.entries:
            if e.path == path:
                return e
        return None


@dataclass(frozen=True)
class ExtensionManifest:
    identity: ExtensionIdentity
    path: str = MANIFEST_PATH
    main: str | None = None
    dependencies: dict[str, str] = field(default_factory=dict)
    extension_pack: tuple[str, ...] = ()
    extension_dependencies: tuple[str, ...] = ()
    untrusted_workspaces: WorkspaceTrust = WorkspaceTrust.ABSENT
    repository_url: str | None = None
    activation_events: tuple[str, ...] = ()
    raw: dict[str, Any] = field(default_factory=dict, repr=False)
    source: bytes = field(default=b"", repr=False, compare=False)


@dataclass(frozen=True)
class ExtensionPackage:
    identity: ExtensionIdentity
    manifest: ExtensionManifest
    inventory: PackageInventory
    package_sha256: str
    findings: tuple[Finding, ...] = ()
    archive: bytes = field(default=b"", repr=False, compare=False)

    def read_entry(self, path: str) -> bytes:
        """Return the decompressed bytes of one inventoried entry."""
        with zipfile.ZipFile(io.BytesIO(self.archive)) as zf:
            for info in zf.infolist():
                if _normalize(info.filename) == path:
                    return zf.read(info)
        raise KeyError(path)


def _normalize(name: str) -> str:
    """Normalize an entry name; raise PathTraversal if it leaves the root."""
    cleaned = name.replace("\\", "/")
    if cleaned.startswith("/") or re.match(r"^[A-Za-z]:", cleaned) or "\x00" in cleaned:
        raise PathTraversal(name)
    norm = posixpath.normpath(cleaned)
    if norm == ".." or norm.startswith("../"):
        raise PathTraversal(name)
    return norm


def _string_list(value: Any) -> tuple[str, ...]:
    if not isinstance(value, list):
        return ()
    return tuple(v.strip() for v in value if isinstance(v, str) and v.strip())


def _trust(capabilities: Any) -> WorkspaceTrust:
    if not isinstance(capabilities, dict):
        return WorkspaceTrust.ABSENT
    ws = capabilities.get("untrustedWorkspaces")
    if not isinstance(ws, dict) or "supported" not in ws:
        return WorkspaceTrust.ABSENT
    supported = ws["supported"]
    # Real manifests use both JSON booleans and strings ("true" in the wild).
    if supported is True or (isinstance(supported, str) and supported.strip().lower() == "true"):
        return WorkspaceTrust.TRUE
    if supported is False or (isinstance(supported, str) and supported.strip().lower() == "false"):
        return WorkspaceTrust.FALSE
    if isinstance(supported, str) and supported.strip().lower() == "limited":
        return WorkspaceTrust.LIMITED
    return WorkspaceTrust.ABSENT


def _repository(value: Any) -> str | None:
    if isinstance(value, str):
        url = value.strip()
    elif isinstance(value, dict) and isinstance(value.get("url"), str):
        url = value["url"].strip()
    else:
        return None
    return url or None


def _dependencies(value: Any) -> dict[str, str]:
    if not isinstance(value, dict):
        return {}
    deps = {}
    for name, spec in value.items():
        # Non-string specs are kept as JSON text so the auditor can flag them.
        deps[str(name)] = spec if isinstance(spec, str) else json.dumps(spec, sort_keys=True)
    return deps


def _clean_id_part(value: Any) -> str | None:
    if not isinstance(value, str):
        return None
    value = value.strip().lower()
    if not value or "/" in value or "\\" in value:
        return None
    return value


def parse_manifest(
    data: bytes,
    path: str = MANIFEST_PATH,
    fallback_identity: ExtensionIdentity | None = None,
) -> ExtensionManifest:
    try:
        text = data.decode("utf-8-sig")
        raw = json.loads(text)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ManifestUnparseable(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ManifestUnparseable(f"{path}: top level is {type(raw).__name__}, expected an object")

    publisher = _clean_id_part(raw.get("publisher"))
    name = _clean_id_part(raw.get("name"))
    version = raw.get("version") if isinstance(raw.get("version"), str) else None
    if fallback_identity is not None:
        publisher = publisher or fallback_identity.publisher
        name = name or fallback_identity.name
        version = version or fallback_identity.version
    if not publisher or not name:
        raise ManifestUnparseable(f"{path}: no usable publisher/name identity")
    identity = ExtensionIdentity(publisher, name, (version or "0.0.0").strip() or "0.0.0")

    main = raw.get("main")
    repository = raw.get("repository")
    return ExtensionManifest(
        identity=identity,
        path=path,
        main=main if isinstance(main, str) and main else None,
        dependencies=_dependencies(raw.get("dependencies")),
        extension_pack=_string_list(raw.get("extensionPack")),
        extension_dependencies=_string_list(raw.get("extensionDependencies")),
        untrusted_workspaces=_trust(raw.get("capabilities")),
        repository_url=_repository(repository),
        activation_events=_string_list(raw.get("activationEvents")),
        raw=raw,
        source=data,
    )


def _vsix_identity(data: bytes) -> ExtensionIdentity | None:
    try:
        root = ElementTree.fromstring(data)
    except ElementTree.ParseError:
        return None
    for el in root.iter():
        if el.tag.rsplit("}", 1)[-1] == "Identity":
            publisher = _clean_id_part(el.get("Publisher"))
            name = _clean_id_part(el.get("Id"))
            if publisher and name:
                return ExtensionIdentity(publisher, name, (el.get("Version") or "0.0.0").strip())
    return None


def _find_manifest(paths: list[str]) -> str | None:
    if MANIFEST_PATH in paths:
        return MANIFEST_PATH
    for p in paths:
        parts = p.split("/")
        if len(parts) == 2 and parts[1] == "package.json":
            return p
    return None


_MODULE_MANIFEST = re.compile(r"(?:^|/)node_modules/((?:@[^/]+/)?[^/@][^/]*)/package\.json$")


def _hash_entry(zf: zipfile.ZipFile, info: zipfile.ZipInfo) -> tuple[str, bytes, bool, bool]:
    """Return (sha256, head bytes, truncated, readable)."""
    digest = hashlib.sha256()
    head = b""
    read = 0
    try:
        with zf.open(info) as fh:
            while read < HASH_LIMIT:
                chunk = fh.read(min(_CHUNK, HASH_LIMIT - read))
                if not chunk:
                    break
                if len(head) < HEAD_BYTES:
                    head += chunk[: HEAD_BYTES - len(head)]
                digest.update(chunk)
                read += len(chunk)
    except (zipfile.BadZipFile, zlib.error, NotImplementedError, RuntimeError, EOFError, OSError):
        return digest.hexdigest(), head, False, False
    return digest.hexdigest(), head, info.file_size > HASH_LIMIT, True


def read_package(archive_bytes: bytes) -> ExtensionPackage:
    if not archive_bytes.startswith(_ZIP_SIGNATURES):
        raise NotAZip("input does not start with a ZIP signature")
    try:
        zf = zipfile.ZipFile(io.BytesIO(archive_bytes))
    except (zipfile.BadZipFile, zipfile.LargeZipFile, ValueError) as exc:
        raise NotAZip(f"unreadable ZIP container: {exc}") from None

    with zf:
        infos: dict[str, zipfile.ZipInfo] = {}
        duplicates: list[str] = []
        for info in zf.infolist():
            path = _normalize(info.filename)
            if info.is_dir() or path == ".":
                continue
            if path in infos:
                duplicates.append(path)
            infos[path] = info  # last entry wins, like extraction tools

        paths = sorted(infos)
        manifest_path = _find_manifest(paths)
        if manifest_path is None:
            raise ManifestMissing(f"no {MANIFEST_PATH} (or */package.json) in archive")

        declared = None
        if VSIX_MANIFEST_PATH in infos:
            try:
                declared = _vsix_identity(zf.read(infos[VSIX_MANIFEST_PATH]))
            except (zipfile.BadZipFile, zlib.error, NotImplementedError, RuntimeError, EOFError, OSError):
                declared = None

        try:
            manifest_bytes = zf.read(infos[manifest_path])
        except (zipfile.BadZipFile, zlib.error, NotImplementedError, RuntimeError, EOFError, OSError) as exc:
            raise ManifestUnparseable(f"{manifest_path}: {exc}") from None
        manifest = parse_manifest(manifest_bytes, manifest_path, fallback_identity=declared)
        identity = manifest.identity

        findings: list[Finding] = []
        if declared is not None and (declared.publisher, declared.name, declared.version) != (
            identity.publisher,
            identity.name,
            identity.version,
        ):
            findings.append(
                make_finding(
                    "PKG-ID-MISMATCH",
                    identity,
                    f'manifest declares "{identity}" but {VSIX_MANIFEST_PATH} declares "{declared}"',
                    Location(manifest_path),
                    declared=str(declared),
                )
            )
        for dup in sorted(set(duplicates)):
            findings.append(
                make_finding("PKG-DUPLICATE-ENTRY", identity, f'archive lists "{dup}" more than once', Location(dup))
            )

        entries = []
        modules = []
        for path in paths:
            info = infos[path]
            sha, head, truncated, readable = _hash_entry(zf, info)
            kind = classify_entry(path, head, manifest_path)
            entries.append(InventoryEntry(path, info.file_size, kind, sha, truncated, readable))
            if not readable:
                findings.append(
                    make_finding("PKG-ENTRY-UNREADABLE", identity, f'cannot decompress "{path}"', Location(path))
                )
                continue
            m = _MODULE_MANIFEST.search(path)
            if m and info.file_size <= 1024 * 1024:
                module = _bundled_module(zf, info, path, m.group(1))
                if module is not None:
                    modules.append(module)

    return ExtensionPackage(
        identity=identity,
        manifest=manifest,
        inventory=PackageInventory(tuple(entries), tuple(modules)),
        package_sha256=hashlib.sha256(archive_bytes).hexdigest(),
        findings=tuple(findings),
        archive=archive_bytes,
    )


def _bundled_module(zf: zipfile.ZipFile, info: zipfile.ZipInfo, path: str, dirname: str) -> BundledModule | None:
    try:
        data = json.loads(zf.read(info).decode("utf-8-sig"))
    except (ValueError, UnicodeDecodeError, zipfile.BadZipFile, zlib.error, NotImplementedError, RuntimeError):
        return None
    if not isinstance(data, dict):
        return None
    name, version = data.get("name"), data.get("version")
    if not isinstance(version, str) or not version.strip():
        return None
    if not isinstance(name, str) or not name.strip():
        name = dirname
    return BundledModule(path, name.strip(), version.strip())


def read_package_file(path) -> ExtensionPackage:
    with open(path, "rb") as fh:
        return read_package(fh.read())
