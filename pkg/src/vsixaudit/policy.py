"""Scan policy: watchlists, thresholds, severities and scoring weights.

The policy file is INI-style text (``configparser``). Every key is optional;
anything left out keeps the compiled-in default. Example::

    [network]
    watchlist = axios, node-fetch, request

    [sizes]
    max_total = 104857600
    max_modules = 20971520

    [source]
    max_parse_size = 10485760
    critical_paths = .ssh/, id_rsa, .aws/credentials

    [severity]
    SRC-API-CLIPBOARD = high

    [scoring]
    medium = 15

    [tiers]
    suspicious = 15
    high_risk = 50

    [intel]
    threshold = 4
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import PolicyError
from .model import RULES, Severity

MiB = 1024 * 1024

DEFAULT_NETWORK_WATCHLIST = ("axios", "node-fetch", "request", "got", "superagent", "undici", "ws")

DEFAULT_CRITICAL_PATHS = (
    ".ssh/",
    "id_rsa",
    "id_ed25519",
    ".aws/credentials",
    ".config/gcloud",
    ".azure/",
    ".kube/config",
    ".npmrc",
    ".netrc",
    ".docker/config.json",
)

DEFAULT_SERVER_MODULES = ("http", "https", "net", "http2", "tls", "http-proxy")

DEFAULT_WEIGHTS = {
    Severity.INFO: 1,
    Severity.LOW: 5,
    Severity.MEDIUM: 15,
    Severity.HIGH: 30,
    Severity.CRITICAL: 50,
}


@dataclass(frozen=True)
class SizePolicy:
    max_total: int = 100 * MiB
    max_modules: int = 20 * MiB


@dataclass(frozen=True)
class Policy:
    network_watchlist: tuple[str, ...] = DEFAULT_NETWORK_WATCHLIST
    sizes: SizePolicy = SizePolicy()
    max_parse_size: int = 10 * MiB
    critical_paths: tuple[str, ...] = DEFAULT_CRITICAL_PATHS
    server_modules: tuple[str, ...] = DEFAULT_SERVER_MODULES
    severity_overrides: dict[str, Severity] = field(default_factory=dict)
    weights: dict[Severity, int] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    suspicious_at: int = 15
    high_risk_at: int = 50
    intel_threshold: int = 4

    def severity_for(self, rule_id: str) -> Severity:
        return self.severity_overrides.get(rule_id, RULES[rule_id].severity)


DEFAULT_POLICY = Policy()


def _list(value: str) -> tuple[str, ...]:
    items = [v.strip() for v in value.replace("\n", ",").split(",")]
    return tuple(v for v in items if v)


def _int(section: str, key: str, value: str) -> int:
    try:
        n = int(value.strip())
    except ValueError:
        raise PolicyError(f"[{section}] {key}: expected an integer, got {value!r}") from None
    if n < 0:
        raise PolicyError(f"[{section}] {key}: must be non-negative")
    return n


def parse_policy(text: str, base: Policy = DEFAULT_POLICY) -> Policy:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # rule ids are case-sensitive
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise PolicyError(f"malformed policy file: {exc}") from None

    changes: dict = {}
    if cp.has_section("network") and "watchlist" in cp["network"]:
        changes["network_watchlist"] = _list(cp["network"]["watchlist"])

    if cp.has_section("sizes"):
        s = cp["sizes"]
        sizes = base.sizes
        if "max_total" in s:
            sizes = replace(sizes, max_total=_int("sizes", "max_total", s["max_total"]))
        if "max_modules" in s:
            sizes = replace(sizes, max_modules=_int("sizes", "max_modules", s["max_modules"]))
        changes["sizes"] = sizes

    if cp.has_section("source"):
        s = cp["source"]
        if "max_parse_size" in s:
            changes["max_parse_size"] = _int("source", "max_parse_size", s["max_parse_size"])
        if "critical_paths" in s:
            changes["critical_paths"] = _list(s["critical_paths"])
        if "server_modules" in s:
            changes["server_modules"] = _list(s["server_modules"])

    if cp.has_section("severity"):
        overrides = dict(base.severity_overrides)
        for rule_id, value in cp["severity"].items():
            if rule_id not in RULES:
                raise PolicyError(f"[severity] unknown rule id {rule_id!r}")
            try:
                overrides[rule_id] = Severity(value.strip().lower())
            except ValueError:
                raise PolicyError(f"[severity] {rule_id}: unknown severity {value!r}") from None
        changes["severity_overrides"] = overrides

    if cp.has_section("scoring"):
        weights = dict(base.weights)
        for key, value in cp["scoring"].items():
            try:
                sev = Severity(key.lower())
            except ValueError:
                raise PolicyError(f"[scoring] unknown severity {key!r}") from None
            weights[sev] = _int("scoring", key, value)
        changes["weights"] = weights

    if cp.has_section("tiers"):
        t = cp["tiers"]
        if "suspicious" in t:
            changes["suspicious_at"] = _int("tiers", "suspicious", t["suspicious"])
        if "high_risk" in t:
            changes["high_risk_at"] = _int("tiers", "high_risk", t["high_risk"])

    if cp.has_section("intel") and "threshold" in cp["intel"]:
        threshold = _int("intel", "threshold", cp["intel"]["threshold"])
        if threshold < 1:
            raise PolicyError("[intel] threshold must be at least 1")
        changes["intel_threshold"] = threshold

    policy = replace(base, **changes)
    if policy.suspicious_at > policy.high_risk_at:
        raise PolicyError("[tiers] suspicious cutoff exceeds high_risk cutoff")
    return policy


def load_policy(path: str | Path | None) -> Policy:
    if path is None:
        return DEFAULT_POLICY
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise PolicyError(f"cannot read policy file {path}: {exc}") from None
    return parse_policy(text)
