"""Semantic versions and npm-style version ranges.

Range strings follow the npm grammar: ``||`` separates alternatives,
whitespace-separated comparators inside one alternative must all hold, and
``^``, ``~``, ``x``/``*`` wildcards, partial versions and hyphen ranges are
rewritten into plain ``<``/``<=``/``>``/``>=``/``=`` comparators. A
prerelease version only satisfies an alternative that itself names a
prerelease on the same ``major.minor.patch``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import total_ordering
from typing import Union

from ..errors import RangeUnparseable, VersionUnparseable

Ident = Union[int, str]

_NUM = r"0|[1-9]\d*"
_PRE_IDENT = r"[0-9A-Za-z-]+"
_VERSION_RE = re.compile(
    rf"^\s*[v=]?\s*({_NUM})(?:\.({_NUM})(?:\.({_NUM}))?)?"
    rf"(?:-({_PRE_IDENT}(?:\.{_PRE_IDENT})*))?(?:\+[0-9A-Za-z.-]+)?\s*$"
)


def _ident(part: str) -> Ident:
    return int(part) if part.isdigit() else part


@total_ordering
@dataclass(frozen=True)
class Version:
    major: int
    minor: int = 0
    patch: int = 0
    prerelease: tuple[Ident, ...] = ()

    @property
    def core(self) -> Version:
        return Version(self.major, self.minor, self.patch)

    def key(self) -> tuple:
        # A release sorts above all of its prereleases; numeric identifiers sort below alphanumeric ones.
        pre = tuple((0, p, "") if isinstance(p, int) else (1, 0, p) for p in self.prerelease)
        return (self.major, self.minor, self.patch, 0 if self.prerelease else 1, pre)

    def __lt__(self, other: Version) -> bool:
        if not isinstance(other, Version):
            return NotImplemented
        return self.key() < other.key()

    def __str__(self) -> str:
        s = f"{self.major}.{self.minor}.{self.patch}"
        if self.prerelease:
            s += "-" + ".".join(str(p) for p in self.prerelease)
        return s


def parse_version(text: str) -> Version:
    m = _VERSION_RE.match(text) if isinstance(text, str) else None
    if not m:
        raise VersionUnparseable(f"not a version: {text!r}")
    major, minor, patch, pre = m.groups()
    prerelease = tuple(_ident(p) for p in pre.split(".")) if pre else ()
    if any(isinstance(p, int) and str(p) != s for p, s in zip(prerelease, (pre or "").split("."))):
        raise VersionUnparseable(f"numeric prerelease identifier with leading zero: {text!r}")
    return Version(int(major), int(minor or 0), int(patch or 0), prerelease)


# --------------------------------------------------------------------------
# ranges


@dataclass(frozen=True)
class Comparator:
    op: str  # one of < <= > >= =
    version: Version

    def test(self, v: Version) -> bool:
        k, c = v.key(), self.version.key()
        return {
            "<": k < c,
            "<=": k <= c,
            ">": k > c,
            ">=": k >= c,
            "=": k == c,
        }[self.op]

    def __str__(self) -> str:
        return f"{self.op}{self.version}"


ANY = Comparator(">=", Version(0))
NOTHING = Comparator("<", Version(0, 0, 0, (0,)))


@dataclass(frozen=True)
class Range:
    raw: str
    alternatives: tuple[tuple[Comparator, ...], ...]

    def __contains__(self, v: Version) -> bool:
        return any(_set_allows(s, v) for s in self.alternatives)

    def __str__(self) -> str:
        return " || ".join(" ".join(str(c) for c in s) for s in self.alternatives)


def _set_allows(comparators: tuple[Comparator, ...], v: Version) -> bool:
    if not all(c.test(v) for c in comparators):
        return False
    if not v.prerelease:
        return True
    for c in comparators:
        if c.version.prerelease and c.version.core == v.core:
            return True
    return False


_XR = r"(?:[xX*]|0|[1-9]\d*)"
_PARTIAL_RE = re.compile(
    rf"^[v=]?\s*({_XR})(?:\.({_XR})(?:\.({_XR})(?:-({_PRE_IDENT}(?:\.{_PRE_IDENT})*))?)?)?(?:\+[0-9A-Za-z.-]+)?$"
)
_HYPHEN_RE = re.compile(r"^(\S+)\s+-\s+(\S+)$")
_SIMPLE_RE = re.compile(r"(\^|~>?|<=|>=|<|>|=)?\s*([^\s<>=^~]+)")


def _is_x(part: str | None) -> bool:
    return part is None or part in ("x", "X", "*")


@dataclass(frozen=True)
class _Partial:
    major: str | None
    minor: str | None
    patch: str | None
    pre: tuple[Ident, ...]

    @property
    def nums(self) -> tuple[int | None, int | None, int | None]:
        # Anything after a wildcard is a wildcard too.
        out: list[int | None] = []
        for p in (self.major, self.minor, self.patch):
            if _is_x(p) or (out and out[-1] is None):
                out.append(None)
            else:
                out.append(int(p))  # type: ignore[arg-type]
        return out[0], out[1], out[2]


def _partial(text: str, raw: str) -> _Partial:
    m = _PARTIAL_RE.match(text)
    if not m:
        raise RangeUnparseable(f"bad version in range {raw!r}: {text!r}")
    major, minor, patch, pre = m.groups()
    return _Partial(major, minor, patch, tuple(_ident(p) for p in pre.split(".")) if pre else ())


def _v(major: int, minor: int = 0, patch: int = 0, pre: tuple[Ident, ...] = ()) -> Version:
    return Version(major, minor, patch, pre)


_ZERO_PRE = (0,)


def _desugar(op: str | None, p: _Partial) -> list[Comparator]:
    M, m, pt = p.nums
    pre = p.pre
    if op in ("^",):
        if M is None:
            return [ANY]
        if m is None:
            return [Comparator(">=", _v(M)), Comparator("<", _v(M + 1, 0, 0, _ZERO_PRE))]
        if pt is None:
            if M > 0:
                upper = _v(M + 1, 0, 0, _ZERO_PRE)
            else:
                upper = _v(0, m + 1, 0, _ZERO_PRE)
            return [Comparator(">=", _v(M, m)), Comparator("<", upper)]
        if M > 0:
            upper = _v(M + 1, 0, 0, _ZERO_PRE)
        elif m > 0:
            upper = _v(0, m + 1, 0, _ZERO_PRE)
        else:
            upper = _v(0, 0, pt + 1, _ZERO_PRE)
        return [Comparator(">=", _v(M, m, pt, pre)), Comparator("<", upper)]
    if op in ("~", "~>"):
        if M is None:
            return [ANY]
        if m is None:
            return [Comparator(">=", _v(M)), Comparator("<", _v(M + 1, 0, 0, _ZERO_PRE))]
        low = _v(M, m, pt or 0, pre if pt is not None else ())
        return [Comparator(">=", low), Comparator("<", _v(M, m + 1, 0, _ZERO_PRE))]

    if M is None:
        # "*", ">=*", "<=x": everything; ">*", "<*": nothing.
        return [NOTHING] if op in ("<", ">") else [ANY]
    if m is None or pt is None:
        lo = _v(M, m or 0, 0)
        hi = _v(M + 1, 0, 0, _ZERO_PRE) if m is None else _v(M, m + 1, 0, _ZERO_PRE)
        if op in (None, "="):
            return [Comparator(">=", lo), Comparator("<", hi)]
        if op == ">":
            return [Comparator(">=", _v(M + 1) if m is None else _v(M, m + 1))]
        if op == ">=":
            return [Comparator(">=", lo)]
        if op == "<":
            return [Comparator("<", _v(M, m or 0, 0, _ZERO_PRE))]
        if op == "<=":
            return [Comparator("<", hi)]
    full = _v(M, m, pt, pre)  # type: ignore[arg-type]
    return [Comparator(op or "=", full)]


def _hyphen(lo: _Partial, hi: _Partial) -> list[Comparator]:
    out: list[Comparator] = []
    M, m, pt = lo.nums
    if M is not None:
        out.append(Comparator(">=", _v(M, m or 0, pt or 0, lo.pre if pt is not None else ())))
    M, m, pt = hi.nums
    if M is None:
        pass
    elif m is None:
        out.append(Comparator("<", _v(M + 1, 0, 0, _ZERO_PRE)))
    elif pt is None:
        out.append(Comparator("<", _v(M, m + 1, 0, _ZERO_PRE)))
    else:
        out.append(Comparator("<=", _v(M, m, pt, hi.pre)))
    return out or [ANY]


def parse_range(text: str) -> Range:
    if not isinstance(text, str):
        raise RangeUnparseable(f"range must be a string, got {type(text).__name__}")
    alternatives = []
    for alt in text.split("||"):
        alt = alt.strip()
        if not alt or alt in ("*", "x", "X"):
            alternatives.append((ANY,))
            continue
        hy = _HYPHEN_RE.match(alt)
        if hy:
            alternatives.append(tuple(_hyphen(_partial(hy.group(1), text), _partial(hy.group(2), text))))
            continue
        comps: list[Comparator] = []
        pos = 0
        while pos < len(alt):
            if alt[pos].isspace():
                pos += 1
                continue
            m = _SIMPLE_RE.match(alt, pos)
            if not m or m.start() != pos:
                raise RangeUnparseable(f"cannot parse range {text!r}")
            comps.extend(_desugar(m.group(1), _partial(m.group(2), text)))
            pos = m.end()
        alternatives.append(tuple(comps) or (ANY,))
    return Range(text, tuple(alternatives))


def version_in_range(version: Version | str, range_: Range | str) -> bool:
    v = parse_version(version) if isinstance(version, str) else version
    r = parse_range(range_) if isinstance(range_, str) else range_
    return v in r


def _candidates(r: Range) -> set[Version]:
    out = {Version(0), Version(0, 0, 0, _ZERO_PRE)}
    for alt in r.alternatives:
        for c in alt:
            v = c.version
            core = v.core
            out.update(
                {
                    v,
                    core,
                    Version(core.major, core.minor, core.patch + 1),
                    Version(core.major, core.minor, core.patch, _ZERO_PRE),
                }
            )
            if v.prerelease:
                out.add(Version(v.major, v.minor, v.patch, v.prerelease + (0,)))
    return out


def ranges_intersect(a: Range | str, b: Range | str) -> bool:
    """True when some version (prereleases included) satisfies both ranges.

    Each alternative accepts an interval of releases plus prereleases on the
    cores it names, so the lowest admissible point of any non-empty overlap
    is one of a finite set of candidates built from the comparator bounds.
    """
    ra = parse_range(a) if isinstance(a, str) else a
    rb = parse_range(b) if isinstance(b, str) else b
    for v in _candidates(ra) | _candidates(rb):
        if v in ra and v in rb:
            return True
    return False
