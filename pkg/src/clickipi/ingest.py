"""Event log parsing and per-student, per-video session construction.

Event log format: one JSON object per line with the keys

    student_id, video_id, timestamp, kind, position_from, position_to, playrate

``kind`` is one of play, pause, seek, ratechange. ``position_from`` is only
required for seeks; ``position_to`` is the position after the event (the seek
target, or the current position for play/pause). ``playrate`` is the player
rate after the event. Blank lines are skipped. Player events with no symbol
(volume, captions, fullscreen) are dropped at parse time.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .tables import read_csv, write_csv

KINDS = ("play", "pause", "seek", "ratechange")
IGNORED_KINDS = frozenset({"volumechange", "volume", "caption", "captions", "subtitle", "fullscreen"})
FIELDS = ("student_id", "video_id", "timestamp", "kind", "position_from", "position_to", "playrate")

DEFAULT_GAP = 1800.0
DEFAULT_END_TOLERANCE = 1.0


class IngestError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class ClickEvent:
    student_id: str
    video_id: str
    timestamp: float
    kind: str
    position_from: float | None = None
    position_to: float | None = None
    playrate: float = 1.0

    def to_record(self) -> dict:
        return {name: getattr(self, name) for name in FIELDS}


@dataclass(frozen=True, slots=True)
class VideoMeta:
    video_id: str
    video_length: float
    week_index: int
    order_in_course: int


@dataclass(frozen=True)
class VideoSession:
    session_id: str
    student_id: str
    video_id: str
    events: tuple[ClickEvent, ...]
    has_end_pause: bool
    video_length: float | None = None
    length_source: str = "meta"  # "meta" or "observed"

    @property
    def start(self) -> float:
        return self.events[0].timestamp

    @property
    def end(self) -> float:
        return self.events[-1].timestamp


def _number(raw, lineno: int, name: str, *, optional: bool = False) -> float | None:
    if raw is None or raw == "":
        if optional:
            return None
        raise IngestError(f"line {lineno}: field '{name}' is missing")
    if isinstance(raw, bool):
        raise IngestError(f"line {lineno}: field '{name}' is not a number: {raw!r}")
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise IngestError(f"line {lineno}: field '{name}' is not a number: {raw!r}") from None
    if not math.isfinite(value):
        raise IngestError(f"line {lineno}: field '{name}' is not finite: {raw!r}")
    return value


def parse_record(record: dict, lineno: int) -> ClickEvent | None:
    if not isinstance(record, dict):
        raise IngestError(f"line {lineno}: expected an object, got {type(record).__name__}")
    for name in ("student_id", "video_id", "kind"):
        value = record.get(name)
        if value is None or str(value) == "":
            raise IngestError(f"line {lineno}: field '{name}' is missing")
    kind = str(record["kind"]).lower()
    if kind in IGNORED_KINDS:
        return None
    if kind not in KINDS:
        raise IngestError(f"line {lineno}: field 'kind' has unknown value {record['kind']!r}")
    timestamp = _number(record.get("timestamp"), lineno, "timestamp")
    if timestamp < 0:
        raise IngestError(f"line {lineno}: field 'timestamp' is negative: {timestamp}")
    playrate = _number(record.get("playrate", 1.0), lineno, "playrate")
    if playrate <= 0:
        raise IngestError(f"line {lineno}: field 'playrate' must be positive: {playrate}")
    pos_from = _number(record.get("position_from"), lineno, "position_from", optional=True)
    pos_to = _number(record.get("position_to"), lineno, "position_to", optional=True)
    if kind == "seek":
        if pos_from is None:
            raise IngestError(f"line {lineno}: field 'position_from' is required for seek")
        if pos_to is None:
            raise IngestError(f"line {lineno}: field 'position_to' is required for seek")
    for name, pos in (("position_from", pos_from), ("position_to", pos_to)):
        if pos is not None and pos < 0:
            raise IngestError(f"line {lineno}: field '{name}' is negative: {pos}")
    return ClickEvent(
        student_id=str(record["student_id"]),
        video_id=str(record["video_id"]),
        timestamp=timestamp,
        kind=kind,
        position_from=pos_from,
        position_to=pos_to,
        playrate=playrate,
    )


def parse_events(lines: Iterable[str]) -> list[ClickEvent]:
    """Parse JSON-lines event records, preserving input order."""
    events = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestError(f"line {lineno}: malformed record ({exc.msg})") from None
        event = parse_record(record, lineno)
        if event is not None:
            events.append(event)
    return events


def read_events(path) -> list[ClickEvent]:
    with open(path, encoding="utf-8") as handle:
        return parse_events(handle)


def format_events(events: Iterable[ClickEvent]) -> str:
    return "".join(json.dumps(e.to_record(), separators=(",", ":")) + "\n" for e in events)


def drop_exact_duplicates(events: Sequence[ClickEvent]) -> tuple[list[ClickEvent], int]:
    seen = set()
    kept = []
    for event in events:
        if event in seen:
            continue
        seen.add(event)
        kept.append(event)
    return kept, len(events) - len(kept)


def read_video_meta(path) -> list[VideoMeta]:
    meta = []
    for lineno, row in enumerate(read_csv(path), start=2):
        try:
            item = VideoMeta(
                video_id=row["video_id"],
                video_length=float(row["video_length"]),
                week_index=int(row["week_index"]),
                order_in_course=int(row["order_in_course"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise IngestError(f"{path}: line {lineno}: bad video metadata row ({exc})") from None
        if item.video_length <= 0 or item.week_index < 1 or item.order_in_course < 1:
            raise IngestError(f"{path}: line {lineno}: video_length, week_index and order must be positive")
        meta.append(item)
    return meta


def write_video_meta(path, meta: Iterable[VideoMeta]):
    rows = [(m.video_id, m.video_length, m.week_index, m.order_in_course) for m in meta]
    return write_csv(path, ("video_id", "video_length", "week_index", "order_in_course"), rows)


def _is_end_pause(event: ClickEvent, length: float | None, tol: float) -> bool:
    return (
        event.kind == "pause"
        and length is not None
        and event.position_to is not None
        and abs(length - event.position_to) <= tol
    )


def build_sessions(
    events: Sequence[ClickEvent],
    meta: Sequence[VideoMeta] = (),
    gap: float = DEFAULT_GAP,
    end_tolerance: float = DEFAULT_END_TOLERANCE,
) -> list[VideoSession]:
    """Group events by (student, video) and split on inactivity longer than ``gap``.

    Sessions come out sorted by student, video and start time. Ties in
    timestamp keep input order. Videos missing from ``meta`` take their
    length from the largest position observed for them (``length_source``
    is then ``"observed"``).
    """
    if gap <= 0:
        raise IngestError(f"session gap must be positive, got {gap}")
    lengths = {m.video_id: m.video_length for m in meta}

    groups: dict[tuple[str, str], list[ClickEvent]] = defaultdict(list)
    observed: dict[str, float] = defaultdict(float)
    for event in events:
        groups[(event.student_id, event.video_id)].append(event)
        for pos in (event.position_from, event.position_to):
            if pos is not None and pos > observed[event.video_id]:
                observed[event.video_id] = pos

    for video_id, length in lengths.items():
        if observed.get(video_id, 0.0) > length + end_tolerance:
            raise IngestError(
                f"video {video_id}: position {observed[video_id]} exceeds video_length {length}"
            )

    sessions = []
    for (student_id, video_id) in sorted(groups):
        ordered = sorted(groups[(student_id, video_id)], key=lambda e: e.timestamp)
        if video_id in lengths:
            length, source = lengths[video_id], "meta"
        else:
            length, source = (observed[video_id] or None), "observed"
        chunks = [[ordered[0]]]
        for prev, cur in zip(ordered, ordered[1:]):
            if cur.timestamp - prev.timestamp > gap:
                chunks.append([])
            chunks[-1].append(cur)
        for k, chunk in enumerate(chunks):
            sessions.append(
                VideoSession(
                    session_id=f"{student_id}:{video_id}:{k}",
                    student_id=student_id,
                    video_id=video_id,
                    events=tuple(chunk),
                    has_end_pause=any(_is_end_pause(e, length, end_tolerance) for e in chunk),
                    video_length=length,
                    length_source=source,
                )
            )
    return sessions


def filter_complete(sessions: Iterable[VideoSession]) -> tuple[list[VideoSession], list[VideoSession]]:
    complete, incomplete = [], []
    for session in sessions:
        (complete if session.has_end_pause else incomplete).append(session)
    return complete, incomplete


def write_sessions(path, sessions: Iterable[VideoSession]):
    rows = [(s.session_id, s.student_id, s.video_id, len(s.events), s.has_end_pause) for s in sessions]
    return write_csv(path, ("session_id", "student_id", "video_id", "n_events", "has_end_pause"), rows)
