"""Multi-level coordinates.

A coordinate is a tuple of per-level index tuples, outermost first, e.g.
``((0, 0), (0,), (1, 1))`` which is written ``((0,0)->0->(1,1))``.  The
communication points attached to a SpaceMatrix are addressed by the matrix
prefix followed by a reserved :class:`CommDomain` entry.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple, Union


@dataclass(frozen=True, order=True)
class CommDomain:
    """Reserved level entry addressing communication domain ``domain``."""

    domain: int = 0

    def __repr__(self) -> str:
        return f"comm{self.domain}"


LevelIndex = Union[Tuple[int, ...], CommDomain]
Coord = Tuple[LevelIndex, ...]

ROOT: Coord = ()


class CoordError(ValueError):
    pass


def _norm_level(entry) -> LevelIndex:
    if isinstance(entry, CommDomain):
        return entry
    if isinstance(entry, bool):
        raise CoordError(f"invalid level index {entry!r}")
    if isinstance(entry, int):
        return (entry,)
    if isinstance(entry, str):
        m = re.fullmatch(r"comm(\d*)", entry.strip())
        if m:
            return CommDomain(int(m.group(1) or 0))
        raise CoordError(f"invalid level index {entry!r}")
    if isinstance(entry, (list, tuple)):
        if len(entry) == 2 and entry[0] == "comm":
            return CommDomain(int(entry[1]))
        out = []
        for x in entry:
            if isinstance(x, bool) or not isinstance(x, int):
                raise CoordError(f"invalid level index {entry!r}")
            out.append(int(x))
        return tuple(out)
    raise CoordError(f"invalid level index {entry!r}")


def coord(*levels) -> Coord:
    """Build a coordinate from loose level entries: ``coord((0, 0), 0, (1, 1))``."""
    return tuple(_norm_level(lv) for lv in levels)


def as_coord(value) -> Coord:
    """Coerce a string, list of levels, or coordinate into a :data:`Coord`."""
    if isinstance(value, str):
        return parse_coord(value)
    if value is None:
        return ROOT
    return tuple(_norm_level(lv) for lv in value)


def format_coord(c: Coord) -> str:
    parts = []
    for lv in c:
        if isinstance(lv, CommDomain):
            parts.append(repr(lv))
        elif len(lv) == 1:
            parts.append(str(lv[0]))
        else:
            parts.append("(" + ",".join(str(i) for i in lv) + ")")
    return "(" + "->".join(parts) + ")"


_TOKEN = re.compile(r"\s*(\([^()]*\)|comm\d*|-?\d+)\s*")


def parse_coord(text: str) -> Coord:
    """Parse ``((0,0)->0->(1,1))``; ``()`` is the root coordinate."""
    s = text.strip()
    if s.startswith("(") and s.endswith(")") and _outer_wraps(s):
        s = s[1:-1].strip()
    if not s:
        return ROOT
    levels = []
    for part in s.split("->"):
        m = _TOKEN.fullmatch(part)
        if not m:
            raise CoordError(f"cannot parse coordinate {text!r} near {part!r}")
        tok = m.group(1)
        if tok.startswith("("):
            inner = tok[1:-1].strip()
            try:
                levels.append(tuple(int(x) for x in inner.split(",") if x.strip()))
            except ValueError as exc:
                raise CoordError(f"cannot parse coordinate {text!r}") from exc
        elif tok.startswith("comm"):
            levels.append(CommDomain(int(tok[4:] or 0)))
        else:
            levels.append((int(tok),))
    return tuple(levels)


def _outer_wraps(s: str) -> bool:
    # True when the first "(" closes at the very end of the string.
    depth = 0
    for i, ch in enumerate(s):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                return i == len(s) - 1
    return False


def sort_key(c: Coord):
    """Deterministic lexicographic key; element indices sort before comm domains."""
    return tuple((1, lv.domain) if isinstance(lv, CommDomain) else (0, lv) for lv in c)


def common_prefix_len(a: Coord, b: Coord) -> int:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


def to_jsonable(c: Coord) -> list:
    return [["comm", lv.domain] if isinstance(lv, CommDomain) else list(lv) for lv in c]


def is_comm(c: Coord) -> bool:
    return bool(c) and isinstance(c[-1], CommDomain)


def prefixes(c: Coord) -> Iterable[Coord]:
    for i in range(len(c) + 1):
        yield c[:i]


def row_major(dims: Sequence[int]):
    """All index tuples of a dense matrix in row-major order."""
    from itertools import product

    return product(*(range(d) for d in dims))


def flat_index(dims: Sequence[int], idx: Sequence[int]) -> int:
    flat = 0
    for d, i in zip(dims, idx):
        flat = flat * d + i
    return flat
