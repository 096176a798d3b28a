"""Endpoint profiles: how to ask a gallery for listings and where packages live.

A profile is a JSON document with request templates and field paths. Field
paths are dot-separated keys with three extras: a numeric key indexes a list,
``[*]`` maps over a list, and ``[key=value]`` picks the first list element
whose ``key`` equals ``value``. Templates substitute ``{base}``, ``{page}``,
``{page_size}``, ``{updated_since}``, ``{publisher}``, ``{name}`` and
``{version}``; a string that is exactly one placeholder keeps the value's
type, so ``"{page}"`` becomes an integer in a JSON body.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

_DATA = Path(__file__).resolve().parent.parent / "data"
BUNDLED = ("fixture", "gallery")

_SEGMENT = re.compile(r"([^.\[\]]+)|\[\*\]|\[([^=\]]+)=([^\]]*)\]")
_MISSING = object()


def get_path(data: Any, path: str) -> Any:
    """Resolve a field path; returns None when any step is missing."""
    if not path:
        return None
    return _walk(data, [m for m in _SEGMENT.finditer(path)])


def _walk(data: Any, steps: list) -> Any:
    for i, m in enumerate(steps):
        if data is None:
            return None
        key, sel_k, sel_v = m.group(1), m.group(2), m.group(3)
        if m.group(0) == "[*]":
            if not isinstance(data, list):
                return None
            return [_walk(item, steps[i + 1 :]) for item in data]
        if sel_k is not None:
            if not isinstance(data, list):
                return None
            data = next((x for x in data if isinstance(x, dict) and str(x.get(sel_k)) == sel_v), None)
        elif isinstance(data, dict):
            data = data.get(key)
        elif isinstance(data, list) and key.isdigit():
            idx = int(key)
            data = data[idx] if idx < len(data) else None
        else:
            return None
    return data


_PLACEHOLDER = re.compile(r"\{(\w+)\}")


def fill(template: Any, values: dict[str, Any]) -> Any:
    """Substitute placeholders throughout a JSON-like template."""
    if isinstance(template, str):
        whole = _PLACEHOLDER.fullmatch(template)
        if whole:
            return values.get(whole.group(1))
        return _PLACEHOLDER.sub(lambda m: "" if values.get(m.group(1)) is None else str(values[m.group(1)]), template)
    if isinstance(template, dict):
        return {k: fill(v, values) for k, v in template.items()}
    if isinstance(template, list):
        return [fill(v, values) for v in template]
    return template


@dataclass(frozen=True)
class RequestSpec:
    method: str
    url: str
    params: dict[str, Any] = field(default_factory=dict)
    headers: dict[str, str] = field(default_factory=dict)
    body: Any = None

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> RequestSpec:
        return cls(
            method=str(d.get("method", "GET")).upper(),
            url=str(d["url"]),
            params=dict(d.get("params") or {}),
            headers=dict(d.get("headers") or {}),
            body=d.get("body"),
        )

    def render(self, values: dict[str, Any]) -> dict[str, Any]:
        params = {k: v for k, v in fill(self.params, values).items() if v not in (None, "")}
        out: dict[str, Any] = {
            "method": self.method,
            "url": fill(self.url, values),
            "params": params,
            "headers": dict(self.headers),
        }
        if self.body is not None:
            out["json"] = fill(self.body, values)
        return out


REQUIRED_FIELDS = ("publisher", "name", "versions")


@dataclass(frozen=True)
class EndpointProfile:
    name: str
    query: RequestSpec
    results_path: str
    fields: dict[str, str]
    download_url: str
    versions: RequestSpec | None = None
    versions_path: str = ""
    listing_url: str = ""

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> EndpointProfile:
        v = d.get("versions") or {}
        fields = dict(d["fields"])
        missing = [f for f in REQUIRED_FIELDS if not fields.get(f)]
        if missing:
            raise ValueError(f"profile {d.get('name')!r} lacks field paths for {missing}")
        return cls(
            name=str(d["name"]),
            query=RequestSpec.from_dict(d["query"]),
            results_path=str(d["results_path"]),
            fields=fields,
            download_url=str(d["download_url"]),
            versions=RequestSpec.from_dict(v) if v.get("url") else None,
            versions_path=str(v.get("path", "")),
            listing_url=str(d.get("listing_url", "")),
        )


def load_profile(name_or_path: str) -> EndpointProfile:
    """A bundled profile by name, or a profile JSON file by path."""
    if name_or_path in BUNDLED:
        path = _DATA / f"profile-{name_or_path}.json"
    else:
        path = Path(name_or_path)
    return EndpointProfile.from_dict(json.loads(path.read_text(encoding="utf-8")))
