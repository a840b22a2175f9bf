"""Possession segmentation and length histograms.

A possession is a maximal run of consecutive in-play actions under control
of one team. It opens at the first deliberate in-ball action (pass,
dribble, won aerial, self-pass, shot) by a team not currently in
possession, grows by one for each same-team in-ball action, and closes:

* with outcome ``Shot`` on a same-team shot (the shot itself counts);
* with outcome ``Loss`` when the ball goes out, on a foul by either side,
  on any deliberate on-ball action by the opposing team, or when the
  period (or match) ends with the possession still open.

Unsuccessful touches never interrupt a possession, and the ``Other`` kind
never opens, extends, or closes one.
"""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, MalformedRecord, UnsegmentableStream
from .events import (
    DELIBERATE_KINDS,
    IN_BALL_KINDS,
    EventKind,
    EventStream,
    validate_stream,
)


class Outcome(Enum):
    Loss = "Loss"
    Shot = "Shot"


@dataclass(frozen=True)
class Possession:
    """A maximal same-team action sequence with its terminal outcome.

    ``event_indices`` point back into the source stream for provenance;
    the terminating opponent event (if any) is not included.
    """

    match_id: str
    team_id: str
    length: int
    outcome: Outcome
    event_indices: tuple[int, ...] = ()

    def __post_init__(self):
        if self.length < 1:
            raise DomainError(f"possession length must be >= 1, got {self.length}")
        if self.event_indices and list(self.event_indices) != sorted(set(self.event_indices)):
            raise DomainError("event_indices must be strictly increasing")


@dataclass(frozen=True)
class LengthHistogram:
    """Counts of possessions by length; the fitting target.

    Invariants: ``n == sum(counts.values()) == n_shot + n_loss`` and
    ``total_actions == sum(length * count) >= n``.
    """

    counts: dict[int, int]
    n: int
    total_actions: int
    n_shot: int
    n_loss: int

    def __post_init__(self):
        if any(length < 1 for length in self.counts):
            raise DomainError("histogram lengths must be positive integers")
        if any(c < 0 for c in self.counts.values()):
            raise DomainError("histogram counts must be non-negative")
        n = sum(self.counts.values())
        total = sum(length * c for length, c in self.counts.items())
        if self.n != n:
            raise DomainError(f"n={self.n} does not match sum of counts {n}")
        if self.total_actions != total:
            raise DomainError(
                f"total_actions={self.total_actions} does not match {total}"
            )
        if self.n_shot + self.n_loss != self.n:
            raise DomainError("n_shot + n_loss must equal n")
        if self.n_shot < 0 or self.n_loss < 0:
            raise DomainError("outcome totals must be non-negative")

    @classmethod
    def from_lengths(
        cls, lengths: Iterable[int], n_shot: int | None = None
    ) -> "LengthHistogram":
        """Build from raw lengths; outcomes default to all-Loss."""
        arr = np.asarray(list(lengths) if not isinstance(lengths, np.ndarray) else lengths)
        uniq, cnt = np.unique(arr, return_counts=True)
        counts = {int(u): int(c) for u, c in zip(uniq, cnt)}
        n = sum(counts.values())
        total = sum(length * c for length, c in counts.items())
        shot = 0 if n_shot is None else int(n_shot)
        return cls(counts, n, total, shot, n - shot)

    def max_length(self) -> int:
        return max(self.counts) if self.counts else 0

    def scaled(self, k: int) -> "LengthHistogram":
        """Histogram with every count multiplied by a positive integer."""
        if k < 1:
            raise DomainError("scale factor must be a positive integer")
        return LengthHistogram(
            {length: c * k for length, c in self.counts.items()},
            self.n * k,
            self.total_actions * k,
            self.n_shot * k,
            self.n_loss * k,
        )


def histogram(possessions: Sequence[Possession]) -> LengthHistogram:
    """Aggregate possessions into a length histogram."""
    counts: Counter[int] = Counter()
    n_shot = 0
    total = 0
    for p in possessions:
        counts[p.length] += 1
        total += p.length
        if p.outcome is Outcome.Shot:
            n_shot += 1
    n = len(possessions)
    return LengthHistogram(dict(sorted(counts.items())), n, total, n_shot, n - n_shot)


def segment(stream: EventStream) -> list[Possession]:
    """Split a validated stream into possession chains.

    Raises :class:`UnsegmentableStream` if the stream has validation
    violations; callers are expected to validate (and fix) first.
    """
    report = validate_stream(stream)
    if not report.ok:
        raise UnsegmentableStream(report.violations)

    possessions: list[Possession] = []

    cur_team: str | None = None
    cur_indices: list[int] = []
    cur_shot = False
    cur_match = ""

    def close(outcome: Outcome) -> None:
        nonlocal cur_team, cur_indices, cur_shot
        if cur_team is not None:
            possessions.append(
                Possession(cur_match, cur_team, len(cur_indices), outcome, tuple(cur_indices))
            )
        cur_team = None
        cur_indices = []
        cur_shot = False

    prev_key: tuple[str, int] | None = None
    for i, ev in enumerate(stream):
        key = (ev.match_id, ev.period)
        if key != prev_key:
            close(Outcome.Loss)  # period or match boundary: ball out of play
            prev_key = key
            cur_match = ev.match_id

        kind = ev.kind
        if kind in (EventKind.Other, EventKind.TouchUnsuccessful):
            continue

        if kind in (EventKind.BallOut, EventKind.Foul):
            close(Outcome.Loss)
            continue

        if cur_team is not None and ev.team_id != cur_team and kind in DELIBERATE_KINDS:
            close(Outcome.Loss)

        if kind in IN_BALL_KINDS:
            if cur_team is None:
                cur_team = ev.team_id
            if ev.team_id == cur_team:
                cur_indices.append(i)
                if kind is EventKind.Shot:
                    close(Outcome.Shot)
        # Interception/Tackle/Clearance never open or extend a possession;
        # by the possessing team they are a no-op.

    close(Outcome.Loss)  # end of stream ends the last period
    return possessions


# ---------------------------------------------------------------------------
# serialization

POSSESSION_CSV_HEADER = ["match_id", "team_id", "length", "outcome"]


def possessions_to_csv(possessions: Sequence[Possession]) -> bytes:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(POSSESSION_CSV_HEADER)
    for p in possessions:
        writer.writerow([p.match_id, p.team_id, p.length, p.outcome.value])
    return out.getvalue().encode("utf-8")


def possessions_to_jsonl(possessions: Sequence[Possession]) -> bytes:
    lines = [
        json.dumps(
            {
                "match_id": p.match_id,
                "team_id": p.team_id,
                "length": p.length,
                "outcome": p.outcome.value,
            },
            sort_keys=True,
        )
        for p in possessions
    ]
    return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")


def _possession_from_fields(match_id, team_id, length_tok, outcome_tok, line: int) -> Possession:
    try:
        length = int(length_tok)
    except (TypeError, ValueError):
        raise MalformedRecord(line, f"length is not an integer: {length_tok!r}") from None
    try:
        outcome = Outcome(outcome_tok)
    except ValueError:
        raise MalformedRecord(line, f"unknown outcome {outcome_tok!r}") from None
    try:
        return Possession(match_id, team_id, length, outcome)
    except DomainError as exc:
        raise MalformedRecord(line, str(exc)) from None


def load_possessions(path: str | Path, fmt: str | None = None) -> list[Possession]:
    """Read a possession file written by this package (CSV or JSON-lines)."""
    path = Path(path)
    if fmt is None:
        fmt = "jsonl" if path.suffix in (".jsonl", ".ndjson", ".json") else "csv"
    text = path.read_bytes().decode("utf-8")
    possessions: list[Possession] = []
    if fmt == "csv":
        reader = csv.reader(io.StringIO(text, newline=""))
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRecord(1, "missing header row") from None
        if header != POSSESSION_CSV_HEADER:
            raise MalformedRecord(1, f"bad header {header!r}; expected {POSSESSION_CSV_HEADER!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise MalformedRecord(line_no, f"expected 4 fields, got {len(row)}")
            possessions.append(_possession_from_fields(row[0], row[1], row[2], row[3], line_no))
    elif fmt == "jsonl":
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, f"invalid JSON: {exc.msg}") from None
            possessions.append(
                _possession_from_fields(
                    obj.get("match_id"),
                    obj.get("team_id"),
                    obj.get("length"),
                    obj.get("outcome"),
                    line_no,
                )
            )
    else:
        raise DomainError(f"unknown format {fmt!r}")
    return possessions


def group_by_team(possessions: Sequence[Possession]) -> dict[str, list[Possession]]:
    """Possessions per team, teams in first-appearance order."""
    grouped: dict[str, list[Possession]] = {}
    for p in possessions:
        grouped.setdefault(p.team_id, []).append(p)
    return grouped
