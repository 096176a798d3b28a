"""Content-addressed package store with an append-only crawl ledger.

Layout under the store root::

    store/<first two hex digits>/<sha256>.vsix
    ledger.jsonl

Each ledger line records one downloaded (extension, version)::

    {"id": "pub.name", "install_count": 12, "sha256": "...", "size": 4096, "version": "1.0.0"}

Lines carry no timestamps so that the same crawl always yields the same bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from ..errors import IntegrityMismatch
from ..model import ExtensionIdentity

LEDGER = "ledger.jsonl"


@dataclass(frozen=True)
class LedgerEntry:
    id: str
    version: str
    sha256: str
    size: int
    install_count: int = 0

    def to_line(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True) + "\n"


class PackageStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._repair_ledger()
        self._entries: dict[tuple[str, str], LedgerEntry] = {}
        for e in self._read_ledger():
            self._entries.setdefault((e.id, e.version), e)

    @property
    def ledger_path(self) -> Path:
        return self.root / LEDGER

    def _repair_ledger(self) -> None:
        # A crash mid-append leaves a partial last line; drop it.
        path = self.ledger_path
        if not path.exists():
            return
        data = path.read_bytes()
        if data and not data.endswith(b"\n"):
            cut = data.rfind(b"\n") + 1
            with open(path, "r+b") as fh:
                fh.truncate(cut)

    def _read_ledger(self) -> Iterator[LedgerEntry]:
        if not self.ledger_path.exists():
            return
        for line in self.ledger_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                d = json.loads(line)
                yield LedgerEntry(d["id"], d["version"], d["sha256"], int(d["size"]), int(d.get("install_count", 0)))

    def path_for(self, sha256: str) -> Path:
        return self.root / "store" / sha256[:2] / f"{sha256}.vsix"

    def lookup(self, identity: ExtensionIdentity) -> LedgerEntry | None:
        return self._entries.get((identity.id, identity.version))

    def entries(self) -> list[LedgerEntry]:
        return list(self._read_ledger())

    def write_blob(self, data: bytes, expected_sha256: str | None = None) -> str:
        """Store bytes under their hash (idempotent); return the hash."""
        sha = hashlib.sha256(data).hexdigest()
        if expected_sha256 is not None and sha != expected_sha256.lower():
            raise IntegrityMismatch(f"expected sha256 {expected_sha256}, got {sha}")
        path = self.path_for(sha)
        if path.exists():
            if hashlib.sha256(path.read_bytes()).hexdigest() == sha:
                return sha
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".part")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return sha

    def record(self, identity: ExtensionIdentity, sha256: str, size: int, install_count: int = 0) -> LedgerEntry:
        """Append a ledger line unless this (id, version) is already recorded."""
        with self._lock:
            key = (identity.id, identity.version)
            if key in self._entries:
                return self._entries[key]
            entry = LedgerEntry(identity.id, identity.version, sha256, size, install_count)
            with open(self.ledger_path, "a", encoding="utf-8") as fh:
                fh.write(entry.to_line())
                fh.flush()
                os.fsync(fh.fileno())
            self._entries[key] = entry
            return entry

    def read(self, entry: LedgerEntry) -> bytes:
        return self.path_for(entry.sha256).read_bytes()

    def packages(self) -> list[tuple[LedgerEntry, Path]]:
        """Ledger entries with their stored files, in ledger order."""
        return [(e, self.path_for(e.sha256)) for e in self.entries() if self.path_for(e.sha256).exists()]
