"""Event data model and event-stream ingestion.

The ingestion atom is a :class:`GameEvent`: one timestamped on-ball or
stoppage event within a match. Streams are parsed from CSV or JSON-lines
files with a fixed, provider-agnostic vocabulary; provider codes must be
mapped to this vocabulary before (or while) parsing, never coerced
silently.
"""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import BinaryIO, Iterator, Mapping

from .errors import ClockRegression, DomainError, MalformedRecord, UnknownEventKind


class EventKind(Enum):
    """Closed vocabulary of event kinds. Unknown input tokens are rejected."""

    Pass = "Pass"
    Dribble = "Dribble"
    AerialWon = "AerialWon"
    SelfPass = "SelfPass"
    Shot = "Shot"
    Clearance = "Clearance"
    Interception = "Interception"
    Tackle = "Tackle"
    Foul = "Foul"
    BallOut = "BallOut"
    TouchUnsuccessful = "TouchUnsuccessful"
    Other = "Other"


class PositionRole(Enum):
    GK = "GK"
    Def = "Def"
    Mid = "Mid"
    Fwd = "Fwd"


#: Deliberate actions that count toward possession length.
IN_BALL_KINDS = frozenset(
    {EventKind.Pass, EventKind.Dribble, EventKind.AerialWon, EventKind.SelfPass, EventKind.Shot}
)

#: Deliberate on-ball actions; any of these by the opposing team ends a possession.
DELIBERATE_KINDS = IN_BALL_KINDS | frozenset(
    {EventKind.Interception, EventKind.Tackle, EventKind.Clearance}
)

MAX_PERIOD = 5

CSV_HEADER = ["match_id", "team_id", "period", "clock_s", "kind", "position_role"]


@dataclass(frozen=True)
class GameEvent:
    """One on-ball or stoppage event.

    ``clock_s`` is seconds elapsed within the period (not cumulative match
    time); only ordering matters downstream. ``position_role`` is optional
    and only consumed by positional chain models.
    """

    match_id: str
    team_id: str
    period: int
    clock_s: float
    kind: EventKind
    position_role: PositionRole | None = None

    def __post_init__(self):
        if not isinstance(self.kind, EventKind):
            raise UnknownEventKind(str(self.kind))
        if self.position_role is not None and not isinstance(self.position_role, PositionRole):
            raise DomainError(f"invalid position role {self.position_role!r}")
        if not 1 <= self.period <= MAX_PERIOD:
            raise DomainError(f"period must be in 1..{MAX_PERIOD}, got {self.period}")
        if self.clock_s < 0:
            raise DomainError(f"clock_s must be non-negative, got {self.clock_s}")
        object.__setattr__(self, "clock_s", float(self.clock_s))


@dataclass(frozen=True)
class EventStream:
    """Ordered events grouped by match.

    The container itself is permissive; :func:`validate_stream` reports
    ordering and contiguity violations as data rather than refusing to
    hold them.
    """

    events: tuple[GameEvent, ...]

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[GameEvent]:
        return iter(self.events)

    def __getitem__(self, idx):
        return self.events[idx]

    def match_ids(self) -> list[str]:
        """Match identifiers in first-appearance order."""
        seen: dict[str, None] = {}
        for ev in self.events:
            seen.setdefault(ev.match_id, None)
        return list(seen)


@dataclass(frozen=True)
class Violation:
    """One invariant violation located in the stream."""

    kind: str
    match_id: str
    index: int
    detail: str
    period: int | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "match_id": self.match_id,
            "index": self.index,
            "period": self.period,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class ValidationReport:
    n_events: int
    kind_counts: dict[str, int]
    team_counts: dict[str, int]
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "n_events": self.n_events,
            "ok": self.ok,
            "kind_counts": dict(self.kind_counts),
            "team_counts": dict(self.team_counts),
            "violations": [v.to_dict() for v in self.violations],
        }


def _parse_kind(token: str, line: int, mapping: Mapping[str, str] | None) -> EventKind:
    if mapping is not None:
        token = mapping.get(token, token)
    try:
        return EventKind(token)
    except ValueError:
        raise UnknownEventKind(token, line=line) from None


def _parse_role(token: str, line: int) -> PositionRole | None:
    if token in ("", None):
        return None
    try:
        return PositionRole(token)
    except ValueError:
        raise MalformedRecord(line, f"unknown position role {token!r}") from None


def _build_event(
    match_id: str,
    team_id: str,
    period_tok,
    clock_tok,
    kind_tok: str,
    role_tok,
    line: int,
    mapping: Mapping[str, str] | None,
) -> GameEvent:
    if not match_id:
        raise MalformedRecord(line, "empty match_id")
    if not team_id:
        raise MalformedRecord(line, "empty team_id")
    try:
        period = int(period_tok)
    except (TypeError, ValueError):
        raise MalformedRecord(line, f"period is not an integer: {period_tok!r}") from None
    try:
        clock_s = float(clock_tok)
    except (TypeError, ValueError):
        raise MalformedRecord(line, f"clock_s is not a number: {clock_tok!r}") from None
    kind = _parse_kind(kind_tok, line, mapping)
    role = _parse_role(role_tok, line)
    try:
        return GameEvent(match_id, team_id, period, clock_s, kind, role)
    except DomainError as exc:
        raise MalformedRecord(line, str(exc)) from None


def _decode(source: BinaryIO | bytes) -> str:
    data = source if isinstance(source, bytes) else source.read()
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedRecord(0, f"input is not valid UTF-8: {exc}") from None


def parse_events(
    source: BinaryIO | bytes,
    fmt: str = "csv",
    kind_mapping: Mapping[str, str] | None = None,
) -> EventStream:
    """Parse an event stream from CSV or JSON-lines bytes.

    Every input either yields an :class:`EventStream` or raises a located
    error; records are never dropped silently. The within-match clock
    ordering invariant is enforced here; match contiguity is only checked
    by :func:`validate_stream`.

    Args:
        source: binary file object or raw bytes (UTF-8; LF or CRLF).
        fmt: ``"csv"`` or ``"jsonl"``.
        kind_mapping: optional provider-token -> canonical-kind mapping
            applied to the kind field before vocabulary lookup.
    """
    text = _decode(source)
    if fmt == "csv":
        records = _parse_csv(text, kind_mapping)
    elif fmt == "jsonl":
        records = _parse_jsonl(text, kind_mapping)
    else:
        raise DomainError(f"unknown format {fmt!r}; expected 'csv' or 'jsonl'")

    events: list[GameEvent] = []
    last_clock: dict[tuple[str, int], float] = {}
    for line_no, ev in records:
        key = (ev.match_id, ev.period)
        prev = last_clock.get(key)
        if prev is not None and ev.clock_s < prev:
            raise ClockRegression(ev.match_id, ev.period, line_no)
        last_clock[key] = ev.clock_s
        events.append(ev)
    return EventStream(tuple(events))


def _parse_csv(
    text: str, mapping: Mapping[str, str] | None
) -> Iterator[tuple[int, GameEvent]]:
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedRecord(1, "missing header row") from None
    if header != CSV_HEADER:
        raise MalformedRecord(1, f"bad header {header!r}; expected {CSV_HEADER!r}")
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue  # ignore blank trailing lines
        if len(row) != len(CSV_HEADER):
            raise MalformedRecord(line_no, f"expected {len(CSV_HEADER)} fields, got {len(row)}")
        yield line_no, _build_event(
            row[0], row[1], row[2], row[3], row[4], row[5], line_no, mapping
        )


def _parse_jsonl(
    text: str, mapping: Mapping[str, str] | None
) -> Iterator[tuple[int, GameEvent]]:
    allowed = set(CSV_HEADER)
    required = allowed - {"position_role"}
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(line_no, f"invalid JSON: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise MalformedRecord(line_no, "record is not a JSON object")
        keys = set(obj)
        if not required <= keys:
            raise MalformedRecord(line_no, f"missing keys {sorted(required - keys)}")
        if not keys <= allowed:
            raise MalformedRecord(line_no, f"unexpected keys {sorted(keys - allowed)}")
        kind_tok = obj["kind"]
        if not isinstance(kind_tok, str):
            raise MalformedRecord(line_no, "kind must be a string")
        yield line_no, _build_event(
            obj["match_id"],
            obj["team_id"],
            obj["period"],
            obj["clock_s"],
            kind_tok,
            obj.get("position_role"),
            line_no,
            mapping,
        )


def serialize_events(stream: EventStream, fmt: str = "csv") -> bytes:
    """Serialize a stream to CSV or JSON-lines bytes; inverse of parse."""
    if fmt == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for ev in stream:
            writer.writerow(
                [
                    ev.match_id,
                    ev.team_id,
                    ev.period,
                    repr(ev.clock_s),
                    ev.kind.value,
                    ev.position_role.value if ev.position_role else "",
                ]
            )
        return out.getvalue().encode("utf-8")
    if fmt == "jsonl":
        lines = []
        for ev in stream:
            lines.append(
                json.dumps(
                    {
                        "match_id": ev.match_id,
                        "team_id": ev.team_id,
                        "period": ev.period,
                        "clock_s": ev.clock_s,
                        "kind": ev.kind.value,
                        "position_role": ev.position_role.value if ev.position_role else None,
                    },
                    sort_keys=True,
                )
            )
        return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")
    raise DomainError(f"unknown format {fmt!r}")


def load_events(
    path: str | Path,
    fmt: str | None = None,
    kind_mapping: Mapping[str, str] | None = None,
) -> EventStream:
    """Read events from a file, inferring format from the suffix if needed."""
    path = Path(path)
    if fmt is None:
        fmt = "jsonl" if path.suffix in (".jsonl", ".ndjson", ".json") else "csv"
    return parse_events(path.read_bytes(), fmt, kind_mapping)


def validate_stream(stream: EventStream) -> ValidationReport:
    """Report every invariant violation; the stream itself is untouched.

    Violations are data, not failures: a report with a non-empty
    ``violations`` list is still a successful validation run.
    """
    kind_counts: Counter[str] = Counter()
    team_counts: Counter[str] = Counter()
    violations: list[Violation] = []

    last_clock: dict[tuple[str, int], float] = {}
    seen_matches: dict[str, None] = {}
    closed_matches: set[str] = set()
    prev_match: str | None = None

    for i, ev in enumerate(stream):
        kind_counts[ev.kind.value] += 1
        team_counts[ev.team_id] += 1

        if ev.match_id != prev_match:
            if prev_match is not None:
                closed_matches.add(prev_match)
            if ev.match_id in closed_matches:
                violations.append(
                    Violation(
                        kind="NonContiguousMatch",
                        match_id=ev.match_id,
                        index=i,
                        detail=f"match {ev.match_id!r} resumes after other matches intervened",
                    )
                )
            seen_matches.setdefault(ev.match_id, None)
            prev_match = ev.match_id

        key = (ev.match_id, ev.period)
        prev = last_clock.get(key)
        if prev is not None and ev.clock_s < prev:
            violations.append(
                Violation(
                    kind="ClockRegression",
                    match_id=ev.match_id,
                    index=i,
                    period=ev.period,
                    detail=f"clock_s {ev.clock_s} after {prev}",
                )
            )
        last_clock[key] = ev.clock_s

    return ValidationReport(
        n_events=len(stream),
        kind_counts=dict(kind_counts),
        team_counts=dict(team_counts),
        violations=tuple(violations),
    )
