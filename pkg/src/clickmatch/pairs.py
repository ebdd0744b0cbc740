"""Canonical user pairs and the pair-list file format (lines ``a,b``)."""
from __future__ import annotations

from pathlib import Path
from typing import Collection, Iterable, NamedTuple, Sequence


class CandidatePair(NamedTuple):
    """Unordered user pair stored in canonical order (``a < b`` lexicographically)."""

    a: str
    b: str


def make_pair(u: str, v: str) -> CandidatePair:
    if u == v:
        raise ValueError(f"pair endpoints must differ, got {u!r} twice")
    return CandidatePair(u, v) if u < v else CandidatePair(v, u)


def is_canonical(pair: CandidatePair) -> bool:
    return pair.a < pair.b


def restrict_pairs(pairs: Iterable[CandidatePair], users: Collection[str]) -> set[CandidatePair]:
    """Pairs with both endpoints inside ``users``."""
    members = set(users)
    return {p for p in pairs if p.a in members and p.b in members}


def write_pairs_file(path: str | Path, pairs: Sequence[CandidatePair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(f"{p.a},{p.b}\n")


def read_pairs_file(path: str | Path) -> list[CandidatePair]:
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'a,b', got {line!r}")
            pairs.append(make_pair(parts[0], parts[1]))
    return pairs
