"""Event timeline shared by the session engine and the preprocessing stages."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import TimelineError


class EventKind(str, Enum):
    TRIAL_PREP = "trial_prep"
    MUSIC_ON = "music_on"
    MUSIC_OFF = "music_off"
    RATING_OPEN = "rating_open"
    REST = "rest"
    BLOCK_START = "block_start"
    ARTIFACT_START = "artifact_start"
    ARTIFACT_END = "artifact_end"


@dataclass(frozen=True)
class TimelineEvent:
    t_ms: int
    kind: EventKind
    trial_id: str | None = None


@dataclass
class EventTimeline:
    """Time-ordered event markers for one recording session.

    Events must be sorted by time and artifact start/end markers must be
    balanced; artifact spans may nest and are merged into their union.
    """

    events: list[TimelineEvent] = field(default_factory=list)

    def __post_init__(self):
        times = [e.t_ms for e in self.events]
        if any(b < a for a, b in zip(times, times[1:])):
            raise TimelineError("events are not sorted by t_ms")
        self.artifact_spans()  # validates marker pairing

    def append(self, event: TimelineEvent) -> None:
        if self.events and event.t_ms < self.events[-1].t_ms:
            raise TimelineError(
                f"event at {event.t_ms} ms is earlier than the last event at {self.events[-1].t_ms} ms"
            )
        self.events.append(event)

    def of_kind(self, kind: EventKind) -> list[TimelineEvent]:
        return [e for e in self.events if e.kind == kind]

    def music_onsets(self) -> list[TimelineEvent]:
        return self.of_kind(EventKind.MUSIC_ON)

    def artifact_spans(self) -> list[tuple[int, int]]:
        """Merged (start_ms, end_ms) artifact intervals."""
        spans: list[tuple[int, int]] = []
        stack: list[int] = []
        for e in self.events:
            if e.kind == EventKind.ARTIFACT_START:
                stack.append(e.t_ms)
            elif e.kind == EventKind.ARTIFACT_END:
                if not stack:
                    raise TimelineError(f"artifact_end at {e.t_ms} ms without a matching artifact_start")
                start = stack.pop()
                if not stack:  # outermost marker closes the span
                    spans.append((start, e.t_ms))
        if stack:
            raise TimelineError(f"unclosed artifact_start at {stack[-1]} ms")
        merged: list[tuple[int, int]] = []
        for start, end in sorted(spans):
            if merged and start <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], end))
            else:
                merged.append((start, end))
        return merged
