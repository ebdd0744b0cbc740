"""Parse raw click logs into per-user chronological token documents.

Events file format: UTF-8, one event per line, TAB-separated
``user_id TAB epoch_seconds TAB url TAB space_separated_title_tokens`` where
the title field is optional. URLs are split into a domain plus path segments;
query strings and fragments are stripped.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

HIER_LEVELS = (0, 1, 2, 3)


class EventParseError(ValueError):
    """Malformed events-file line; message carries the 1-based line number."""


@dataclass(frozen=True)
class Event:
    user_id: str
    timestamp: int
    domain: str
    path_segments: tuple[str, ...]
    title_tokens: tuple[str, ...] | None = None


@dataclass
class UserLog:
    """All events of one device-user, sorted ascending by timestamp.

    Ties keep input order (stable sort).
    """

    user_id: str
    events: list[Event]


def _split_url(url: str) -> tuple[str, tuple[str, ...]]:
    url = url.split("#", 1)[0].split("?", 1)[0]
    parts = url.split("/")
    domain = parts[0]
    segments = tuple(p for p in parts[1:] if p)
    return domain, segments


def parse_event_line(line: str, lineno: int) -> Event:
    fields = line.split("\t")
    if len(fields) not in (3, 4):
        raise EventParseError(f"line {lineno}: expected 3 or 4 TAB-separated fields, got {len(fields)}")
    user_id, ts_field, url = fields[0], fields[1], fields[2]
    if not user_id:
        raise EventParseError(f"line {lineno}: empty user_id")
    try:
        timestamp = int(ts_field)
    except ValueError:
        raise EventParseError(f"line {lineno}: non-integer timestamp {ts_field!r}") from None
    if timestamp < 0:
        raise EventParseError(f"line {lineno}: negative timestamp {timestamp}")
    domain, segments = _split_url(url)
    if not domain:
        raise EventParseError(f"line {lineno}: empty domain in url {url!r}")
    title: tuple[str, ...] | None = None
    if len(fields) == 4 and fields[3]:
        title = tuple(t for t in fields[3].split(" ") if t)
        if not title:
            title = None
    return Event(user_id, timestamp, domain, segments, title)


def parse_events(lines: Iterable[str]) -> list[UserLog]:
    """One UserLog per distinct user, events sorted by timestamp, users sorted by id."""
    per_user: dict[str, list[Event]] = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\n")
        if line == "":
            raise EventParseError(f"line {lineno}: blank line")
        event = parse_event_line(line, lineno)
        per_user.setdefault(event.user_id, []).append(event)
    logs = []
    for user_id in sorted(per_user):
        events = sorted(per_user[user_id], key=lambda e: e.timestamp)
        logs.append(UserLog(user_id, events))
    return logs


def read_events_file(path: str | Path) -> list[UserLog]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_events(fh)


def format_event(e: Event) -> str:
    url = "/".join((e.domain,) + e.path_segments)
    if e.title_tokens:
        return f"{e.user_id}\t{e.timestamp}\t{url}\t{' '.join(e.title_tokens)}"
    return f"{e.user_id}\t{e.timestamp}\t{url}"


def write_events_file(path: str | Path, logs: Sequence[UserLog]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for log in logs:
            for e in log.events:
                fh.write(format_event(e) + "\n")


def token_at_level(e: Event, h: int) -> str:
    """URL-prefix token at hierarchy depth ``h``: the domain plus the first
    ``min(h, available)`` path segments, joined by ``/`` (``h=0`` is the bare domain)."""
    if h not in HIER_LEVELS:
        raise ValueError(f"hierarchy level must be in {HIER_LEVELS}, got {h}")
    return "/".join((e.domain,) + e.path_segments[:h])


def dedup_consecutive(tokens: Sequence[str]) -> list[str]:
    """Drop adjacent repeats, keeping order; non-adjacent duplicates survive."""
    out: list[str] = []
    for tok in tokens:
        if not out or out[-1] != tok:
            out.append(tok)
    return out


def build_user_documents(logs: Sequence[UserLog], h: int) -> dict[str, list[str]]:
    """Per user: level-``h`` tokens of the chronological events, consecutive repeats removed."""
    return {
        log.user_id: dedup_consecutive([token_at_level(e, h) for e in log.events])
        for log in logs
    }


def build_title_documents(logs: Sequence[UserLog]) -> dict[str, list[str]]:
    """Per user: concatenated title tokens of titled events in chronological order."""
    docs: dict[str, list[str]] = {}
    for log in logs:
        words: list[str] = []
        for e in log.events:
            if e.title_tokens:
                words.extend(e.title_tokens)
        docs[log.user_id] = words
    return docs


def split_users(
    all_users: Sequence[str], fractions: tuple[float, float], seed: int
) -> tuple[list[str], list[str], list[str]]:
    """Partition users into (scorer-train, voter-train, heldout), deterministic by seed.

    Callers split only users that appear in ground-truth pairs; a truth pair
    whose endpoints land in different partitions belongs to neither partition's
    positive set (apply :func:`clickmatch.pairs.restrict_pairs` per partition).
    """
    if not all_users:
        raise ValueError("cannot split an empty user list")
    f1, f2 = fractions
    if f1 < 0 or f2 < 0 or f1 + f2 > 1.0 + 1e-9:
        raise ValueError(f"fractions must be non-negative with sum <= 1, got {fractions}")
    order = sorted(all_users)
    random.Random(seed).shuffle(order)
    n = len(order)
    n1 = int(f1 * n + 1e-9)
    n2 = int(f2 * n + 1e-9)
    return order[:n1], order[n1 : n1 + n2], order[n1 + n2 :]


SPLIT_NAMES = ("scorer", "voter", "heldout")


def write_splits_file(
    path: str | Path, splits: Mapping[str, Sequence[str]]
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for name in SPLIT_NAMES:
            for user in sorted(splits.get(name, ())):
                fh.write(f"{user}\t{name}\n")


def read_splits_file(path: str | Path) -> dict[str, list[str]]:
    splits: dict[str, list[str]] = {name: [] for name in SPLIT_NAMES}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[1] not in SPLIT_NAMES:
                raise ValueError(f"{path}:{lineno}: expected 'user TAB split', got {line!r}")
            splits[parts[1]].append(parts[0])
    return splits
