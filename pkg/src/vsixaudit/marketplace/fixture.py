"""A local gallery server for tests and offline demos.

Endpoints (all JSON except package downloads):

- ``GET /listings?page=N&page_size=K&updated_since=T``: listings sorted by id,
  filtered to ``updated_at >= T``.
- ``GET /versions/<publisher>/<name>``: ``{"versions": [...]}``.
- ``GET /packages/<publisher>/<name>/<version>``: the package bytes.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, unquote, urlparse


@dataclass
class FixtureExtension:
    publisher: str
    name: str
    packages: dict[str, bytes]  # version -> bytes
    install_count: int = 0
    verified: bool = False
    published_at: str = "2024-01-01T00:00:00Z"
    updated_at: str = "2024-01-01T00:00:00Z"
    display_name: str = ""

    @property
    def id(self) -> str:
        return f"{self.publisher}.{self.name}"

    def listing(self, base: str) -> dict:
        return {
            "publisher": self.publisher,
            "name": self.name,
            "display_name": self.display_name or self.name,
            "install_count": self.install_count,
            "verified": self.verified,
            "published_at": self.published_at,
            "updated_at": self.updated_at,
            "versions": list(self.packages),
            "url": f"{base}/items/{self.id}",
        }


@dataclass
class FixtureGallery:
    extensions: list[FixtureExtension] = field(default_factory=list)
    fail_next: int = 0  # answer this many requests with 503 first
    request_log: list[str] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def find(self, publisher: str, name: str) -> FixtureExtension | None:
        for e in self.extensions:
            if e.publisher == publisher and e.name == name:
                return e
        return None

    def sorted(self) -> list[FixtureExtension]:
        return sorted(self.extensions, key=lambda e: e.id)


def _handler(gallery: FixtureGallery, base: list[str]):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args) -> None:  # keep test output quiet
            pass

        def _send(self, code: int, body: bytes, ctype: str = "application/json") -> None:
            self.send_response(code)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _json(self, code: int, obj) -> None:
            self._send(code, json.dumps(obj, sort_keys=True).encode())

        def do_GET(self) -> None:  # noqa: N802
            url = urlparse(self.path)
            with gallery._lock:
                gallery.request_log.append(self.path)
                if gallery.fail_next > 0:
                    gallery.fail_next -= 1
                    self._json(503, {"error": "injected failure"})
                    return
            parts = [unquote(p) for p in url.path.strip("/").split("/")]
            if parts == ["listings"]:
                q = parse_qs(url.query)
                page = int(q.get("page", ["1"])[0])
                size = int(q.get("page_size", ["100"])[0])
                since = q.get("updated_since", [""])[0]
                items = [e for e in gallery.sorted() if not since or e.updated_at >= since]
                chunk = items[(page - 1) * size : page * size]
                self._json(200, {"page": page, "total": len(items), "results": [e.listing(base[0]) for e in chunk]})
            elif len(parts) == 3 and parts[0] == "versions":
                ext = gallery.find(parts[1], parts[2])
                if ext is None:
                    self._json(404, {"error": "unknown extension"})
                else:
                    self._json(200, {"versions": list(ext.packages)})
            elif len(parts) == 4 and parts[0] == "packages":
                ext = gallery.find(parts[1], parts[2])
                data = ext.packages.get(parts[3]) if ext else None
                if data is None:
                    self._json(404, {"error": "unknown package"})
                else:
                    self._send(200, data, "application/octet-stream")
            else:
                self._json(404, {"error": "no such endpoint"})

    return Handler


class FixtureServer:
    """Serve a :class:`FixtureGallery` on 127.0.0.1 from a background thread."""

    def __init__(self, gallery: FixtureGallery, port: int = 0):
        self.gallery = gallery
        self._base = [""]
        self.httpd = ThreadingHTTPServer(("127.0.0.1", port), _handler(gallery, self._base))
        self._base[0] = f"http://127.0.0.1:{self.httpd.server_address[1]}"
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        return self._base[0]

    def __enter__(self) -> FixtureServer:
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
