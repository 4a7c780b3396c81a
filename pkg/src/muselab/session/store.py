"""Session persistence: append-only journaling with restart recovery,
device-stream ingestion, and the exported dataset bundle.

Bundle layout per visit:
  participant/<id>/session<k>/{manifest.json, events.jsonl, eeg.csv,
  fnirs.csv, ratings.csv, clips.json}
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import dataio
from ..analysis import RatingTriple
from ..errors import NotFoundError, SchemaError, StateError
from ..quadrants import EmotionQuadrant
from ..sigproc import EEG_SAMPLE_RATE, FNIRS_SAMPLE_RATE, EegRecording, FnirsRecording
from ..timeline import EventTimeline
from .machine import SessionConfig, SessionMachine, TrialRecord
from .plan import SessionPlan

STREAM_RATES = {"eeg": EEG_SAMPLE_RATE, "fnirs": FNIRS_SAMPLE_RATE}


class RealClock:
    """Milliseconds since construction, monotonic."""

    def __init__(self):
        self._origin = time.monotonic()

    def now_ms(self) -> int:
        return int((time.monotonic() - self._origin) * 1000)


class SimulatedClock:
    def __init__(self, start_ms: int = 0):
        self._now = start_ms

    def now_ms(self) -> int:
        return self._now

    def advance(self, delta_ms: int) -> None:
        self._now += delta_ms

    def set(self, t_ms: int) -> None:
        self._now = t_ms


@dataclass
class StreamBuffer:
    kind: str
    rows: list[np.ndarray] = field(default_factory=list)
    last_timestamp: float | None = None
    discontinuities: list[tuple[float, float]] = field(default_factory=list)

    def append(self, chunk: np.ndarray) -> int:
        times = chunk[:, 0]
        if np.any(np.diff(times) <= 0):
            raise SchemaError(f"{self.kind} chunk timestamps are not strictly increasing")
        if self.last_timestamp is not None:
            if times[0] <= self.last_timestamp:
                raise SchemaError(
                    f"{self.kind} chunk starts at {times[0]} ms, not after {self.last_timestamp} ms"
                )
            period_ms = 1000.0 / STREAM_RATES[self.kind]
            if times[0] - self.last_timestamp > 2 * period_ms:
                self.discontinuities.append((self.last_timestamp, times[0]))
        self.rows.append(chunk)
        self.last_timestamp = float(times[-1])
        return len(chunk)

    def matrix(self) -> np.ndarray | None:
        if not self.rows:
            return None
        return np.concatenate(self.rows, axis=0)


class SessionRuntime:
    """One live session: machine + streams + journal, mutated under a lock."""

    def __init__(self, session_id: str, plan: SessionPlan, directory: Path, config: SessionConfig):
        self.session_id = session_id
        self.machine = SessionMachine(plan, config)
        self.directory = directory
        self.lock = threading.Lock()
        self.streams: dict[int, dict[str, StreamBuffer]] = {}
        self.exported_to: str | None = None

    def stream(self, session_index: int, kind: str) -> StreamBuffer:
        per_session = self.streams.setdefault(session_index, {})
        if kind not in per_session:
            per_session[kind] = StreamBuffer(kind=kind)
        return per_session[kind]

    def journal_path(self) -> Path:
        return self.directory / "journal.jsonl"

    def journal(self, entry: dict) -> None:
        with open(self.journal_path(), "a") as handle:
            handle.write(json.dumps(entry, sort_keys=True) + "\n")


class SessionEngine:
    """Owns all live sessions; every mutation is serialized per session."""

    def __init__(self, root: Path | str, clock=None, config: SessionConfig = SessionConfig()):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.clock = clock or RealClock()
        self.config = config
        self.sessions: dict[str, SessionRuntime] = {}

    # -- lifecycle ----------------------------------------------------------

    def create_session(self, plan: SessionPlan) -> str:
        index = len(self.sessions) + 1
        session_id = f"{plan.participant_id}-{index:03d}"
        while session_id in self.sessions:
            index += 1
            session_id = f"{plan.participant_id}-{index:03d}"
        directory = self.root / session_id
        directory.mkdir(parents=True, exist_ok=True)
        runtime = SessionRuntime(session_id, plan, directory, self.config)
        runtime.journal({"op": "create", "t_ms": self.clock.now_ms(), "plan": plan.to_dict()})
        self.sessions[session_id] = runtime
        return session_id

    def _runtime(self, session_id: str) -> SessionRuntime:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise NotFoundError(f"unknown session {session_id!r}") from None

    def start(self, session_id: str) -> dict:
        runtime = self._runtime(session_id)
        with runtime.lock:
            now = self.clock.now_ms()
            runtime.machine.start_session(now)
            runtime.journal({"op": "start", "t_ms": now})
            return runtime.machine.snapshot(now)

    def state(self, session_id: str) -> dict:
        runtime = self._runtime(session_id)
        with runtime.lock:
            return runtime.machine.snapshot(self.clock.now_ms())

    def record_rating(self, session_id: str, trial_id: str, rating: RatingTriple) -> TrialRecord:
        runtime = self._runtime(session_id)
        with runtime.lock:
            now = self.clock.now_ms()
            record = runtime.machine.record_rating(now, trial_id, rating)
            runtime.journal(
                {
                    "op": "rating",
                    "t_ms": now,
                    "trial_id": trial_id,
                    "valence": rating.valence,
                    "arousal": rating.arousal,
                    "liking": rating.liking,
                }
            )
            return record

    def submit_arithmetic(self, session_id: str, block_id: str, answers: list[int]) -> dict:
        runtime = self._runtime(session_id)
        with runtime.lock:
            now = self.clock.now_ms()
            runtime.machine.submit_arithmetic(now, block_id, answers)
            runtime.journal({"op": "arithmetic", "t_ms": now, "block_id": block_id, "answers": answers})
            return runtime.machine.snapshot(now)

    # -- streams --------------------------------------------------------------

    def ingest_samples(self, session_id: str, kind: str, chunk_text: str) -> dict:
        runtime = self._runtime(session_id)
        chunk = dataio.parse_stream_chunk(kind, chunk_text)
        with runtime.lock:
            runtime.machine.advance(self.clock.now_ms())
            session_index = min(runtime.machine._session_number, 2)
            buffer = runtime.stream(session_index, kind)
            before = len(buffer.discontinuities)
            accepted = buffer.append(chunk)
            path = runtime.directory / f"session{session_index}_{kind}.csv"
            header = not path.exists()
            with open(path, "a") as handle:
                if header:
                    columns = dataio.EEG_COLUMNS if kind == "eeg" else dataio.FNIRS_COLUMNS
                    handle.write(",".join(columns) + "\n")
                for row in chunk:
                    handle.write(",".join(repr(v) for v in row.tolist()) + "\n")
            return {
                "accepted": accepted,
                "session_index": session_index,
                "new_discontinuities": len(buffer.discontinuities) - before,
            }

    # -- export ---------------------------------------------------------------

    def export(self, session_id: str, out_root: Path | str | None = None) -> Path:
        runtime = self._runtime(session_id)
        with runtime.lock:
            machine = runtime.machine
            machine.advance(self.clock.now_ms())
            plan = machine.plan
            out_root = Path(out_root) if out_root is not None else self.root / "export"
            clip_quadrants = plan.clip_quadrants()
            participant_dir = out_root / "participant" / plan.participant_id
            for session_index in (1, 2):
                trials = [t for t in machine.trials.values() if t.trial_id.startswith(f"s{session_index}b")]
                if not trials:
                    continue
                events = _events_for_session(machine, session_index)
                eeg = _recording_from_buffer(runtime, session_index, "eeg")
                fnirs = _recording_from_buffer(runtime, session_index, "fnirs")
                export_session_bundle(
                    out_root,
                    plan.participant_id,
                    session_index,
                    eeg=eeg,
                    fnirs=fnirs,
                    timeline=events,
                    trials=trials,
                    clip_quadrants=clip_quadrants,
                    source="live",
                )
            runtime.exported_to = str(participant_dir)
            runtime.journal({"op": "export", "t_ms": self.clock.now_ms(), "path": str(participant_dir)})
            return participant_dir

    # -- recovery ---------------------------------------------------------------

    @classmethod
    def recover(cls, root: Path | str, clock=None, config: SessionConfig = SessionConfig()) -> "SessionEngine":
        """Rebuild engine state by replaying each session's journal."""
        engine = cls(root, clock=clock, config=config)
        for journal_path in sorted(engine.root.glob("*/journal.jsonl")):
            directory = journal_path.parent
            session_id = directory.name
            runtime = None
            for line in journal_path.read_text().splitlines():
                entry = json.loads(line)
                if entry["op"] == "create":
                    plan = SessionPlan.from_dict(entry["plan"])
                    runtime = SessionRuntime(session_id, plan, directory, config)
                    engine.sessions[session_id] = runtime
                elif runtime is None:
                    raise StateError(f"journal for {session_id} does not begin with create")
                elif entry["op"] == "start":
                    runtime.machine.start_session(entry["t_ms"])
                elif entry["op"] == "rating":
                    runtime.machine.record_rating(
                        entry["t_ms"],
                        entry["trial_id"],
                        RatingTriple(entry["valence"], entry["arousal"], entry["liking"]),
                    )
                elif entry["op"] == "arithmetic":
                    runtime.machine.submit_arithmetic(entry["t_ms"], entry["block_id"], entry["answers"])
            if runtime is None:
                continue
            for stream_path in sorted(directory.glob("session*_*.csv")):
                name = stream_path.stem  # session<k>_<kind>
                session_index = int(name.split("_")[0].removeprefix("session"))
                kind = name.split("_")[1]
                matrix = np.loadtxt(stream_path, delimiter=",", skiprows=1, ndmin=2)
                if matrix.size:
                    runtime.stream(session_index, kind).append(matrix)
        return engine


def _events_for_session(machine: SessionMachine, session_index: int) -> EventTimeline:
    prefix = f"s{session_index}b"
    events = [e for e in machine.timeline.events if e.trial_id is not None and e.trial_id.startswith(prefix)]
    return EventTimeline(events=events)


def _recording_from_buffer(runtime: SessionRuntime, session_index: int, kind: str):
    buffer = runtime.streams.get(session_index, {}).get(kind)
    matrix = buffer.matrix() if buffer else None
    if matrix is None:
        return None
    timestamps = matrix[:, 0].astype(np.int64)
    if kind == "eeg":
        return EegRecording(fp1=matrix[:, 1], fp2=matrix[:, 2], timestamps_ms=timestamps)
    intensity = np.empty((8, 2, len(matrix)))
    for c in range(8):
        for w in range(2):
            intensity[c, w, :] = matrix[:, 1 + c * 2 + w]
    return FnirsRecording(intensity=intensity, timestamps_ms=timestamps)


# ---------------------------------------------------------------------------
# Bundle writer / reader
# ---------------------------------------------------------------------------


def export_session_bundle(
    out_root: Path | str,
    participant_id: str,
    session_index: int,
    *,
    eeg: EegRecording | None,
    fnirs: FnirsRecording | None,
    timeline: EventTimeline,
    trials: list[TrialRecord],
    clip_quadrants: dict,
    source: str,
) -> Path:
    """Write one session's bundle; rewriting identical inputs is byte-stable."""
    directory = Path(out_root) / "participant" / participant_id / f"session{session_index}"
    directory.mkdir(parents=True, exist_ok=True)

    if eeg is not None:
        dataio.save_eeg_csv(directory / "eeg.csv", eeg)
    if fnirs is not None:
        dataio.save_fnirs_csv(directory / "fnirs.csv", fnirs)
    dataio.save_events_jsonl(directory / "events.jsonl", timeline)

    trials = sorted(trials, key=lambda t: t.t_prep)
    rows = []
    for t in trials:
        rows.append(
            {
                "trial_id": t.trial_id,
                "clip_id": t.clip_id,
                "music_quadrant": t.music_quadrant.value,
                "valence": t.rating.valence if t.rating else None,
                "arousal": t.rating.arousal if t.rating else None,
                "liking": t.rating.liking if t.rating else None,
                "derived_label": t.derived_label.quadrant.value if t.derived_label else None,
                "label_source": t.derived_label.source.value if t.derived_label else None,
            }
        )
    dataio.save_ratings_csv(directory / "ratings.csv", rows)

    clips_payload = {cid: quadrant.value for cid, quadrant in sorted(clip_quadrants.items())}
    (directory / "clips.json").write_text(json.dumps(clips_payload, indent=2, sort_keys=True) + "\n")

    manifest = {
        "participant_id": participant_id,
        "session_index": session_index,
        "source": source,
        "n_trials": len(trials),
        "trial_ids": [t.trial_id for t in trials],
        "incomplete_trials": [t.trial_id for t in trials if t.t_rest is None],
        "unrated_trials": [t.trial_id for t in trials if t.rating is None],
        "has_eeg": eeg is not None,
        "has_fnirs": fnirs is not None,
        "schema": {
            "eeg": dataio.EEG_COLUMNS,
            "fnirs": dataio.FNIRS_COLUMNS,
            "ratings": dataio.RATINGS_COLUMNS,
        },
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


@dataclass
class SessionBundle:
    directory: Path
    manifest: dict
    eeg: EegRecording | None
    fnirs: FnirsRecording | None
    timeline: EventTimeline
    ratings: list[dict]
    clips: dict


def load_bundle(directory: Path | str) -> SessionBundle:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    eeg_path = directory / "eeg.csv"
    fnirs_path = directory / "fnirs.csv"
    return SessionBundle(
        directory=directory,
        manifest=manifest,
        eeg=dataio.load_eeg_csv(eeg_path) if eeg_path.exists() else None,
        fnirs=dataio.load_fnirs_csv(fnirs_path) if fnirs_path.exists() else None,
        timeline=dataio.load_events_jsonl(directory / "events.jsonl"),
        ratings=dataio.load_ratings_csv(directory / "ratings.csv"),
        clips={cid: EmotionQuadrant(q) for cid, q in json.loads((directory / "clips.json").read_text()).items()},
    )


def find_session_dirs(root: Path | str) -> list[Path]:
    """All session bundle directories under a dataset root, sorted."""
    root = Path(root)
    return sorted(p.parent for p in root.glob("participant/*/session*/manifest.json"))
