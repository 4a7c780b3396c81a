"""On-disk formats for recordings, events, and ratings.

CSV schemas:
  EEG:    timestamp_ms,fp1_uv,fp2_uv            (250 Hz)
  fNIRS:  timestamp_ms,ch1_735,ch1_850,...,ch8_735,ch8_850  (25 Hz, raw intensity)
  events: JSON lines {t_ms, kind, trial_id}
Floats are written with shortest round-trip precision so load(save(x)) is
bit-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

from .analysis import RatingTriple
from .errors import InputError, SchemaError
from .sigproc import EegRecording, FnirsRecording, N_FNIRS_CHANNELS, WAVELENGTHS_NM
from .timeline import EventKind, EventTimeline, TimelineEvent

EEG_COLUMNS = ["timestamp_ms", "fp1_uv", "fp2_uv"]
FNIRS_COLUMNS = ["timestamp_ms"] + [
    f"ch{c + 1}_{wl}" for c in range(N_FNIRS_CHANNELS) for wl in WAVELENGTHS_NM
]
RATINGS_COLUMNS = [
    "trial_id",
    "clip_id",
    "music_quadrant",
    "valence",
    "arousal",
    "liking",
    "derived_label",
    "label_source",
]


def _write_exact_csv(path, columns: dict) -> None:
    """Integer and float columns with shortest round-trip float formatting.

    repr() emits the shortest string that parses back to the same double;
    pandas' default to_csv/read_csv float handling loses ULPs.
    """
    rendered = []
    for values in columns.values():
        arr = np.asarray(values)
        if np.issubdtype(arr.dtype, np.integer):
            rendered.append([str(v) for v in arr.tolist()])
        else:
            rendered.append([repr(v) for v in arr.tolist()])
    with open(path, "w") as handle:
        handle.write(",".join(columns) + "\n")
        handle.write("\n".join(",".join(row) for row in zip(*rendered)))
        handle.write("\n")


def _read_exact_csv(path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def save_eeg_csv(path, recording: EegRecording, float_format: str | None = None) -> None:
    columns = {
        "timestamp_ms": recording.timestamps_ms,
        "fp1_uv": recording.fp1,
        "fp2_uv": recording.fp2,
    }
    if float_format is None:
        _write_exact_csv(path, columns)
    else:
        pd.DataFrame(columns).to_csv(path, index=False, float_format=float_format)


def load_eeg_csv(path) -> EegRecording:
    frame = _read_exact_csv(path)
    if list(frame.columns) != EEG_COLUMNS:
        raise SchemaError(f"EEG CSV columns must be {EEG_COLUMNS}, got {list(frame.columns)}")
    return EegRecording(
        fp1=frame["fp1_uv"].to_numpy(dtype=np.float64),
        fp2=frame["fp2_uv"].to_numpy(dtype=np.float64),
        timestamps_ms=frame["timestamp_ms"].to_numpy(dtype=np.int64),
    )


def save_fnirs_csv(path, recording: FnirsRecording) -> None:
    data = {"timestamp_ms": recording.timestamps_ms}
    for c in range(N_FNIRS_CHANNELS):
        for w, wl in enumerate(WAVELENGTHS_NM):
            data[f"ch{c + 1}_{wl}"] = recording.intensity[c, w, :]
    _write_exact_csv(path, data)


def load_fnirs_csv(path) -> FnirsRecording:
    frame = _read_exact_csv(path)
    if list(frame.columns) != FNIRS_COLUMNS:
        raise SchemaError(f"fNIRS CSV columns must be {FNIRS_COLUMNS}, got {list(frame.columns)}")
    n = len(frame)
    intensity = np.empty((N_FNIRS_CHANNELS, len(WAVELENGTHS_NM), n))
    for c in range(N_FNIRS_CHANNELS):
        for w, wl in enumerate(WAVELENGTHS_NM):
            intensity[c, w, :] = frame[f"ch{c + 1}_{wl}"].to_numpy(dtype=np.float64)
    return FnirsRecording(intensity=intensity, timestamps_ms=frame["timestamp_ms"].to_numpy(dtype=np.int64))


def save_events_jsonl(path, timeline: EventTimeline) -> None:
    with open(path, "w") as handle:
        for event in timeline.events:
            handle.write(
                json.dumps({"t_ms": event.t_ms, "kind": event.kind.value, "trial_id": event.trial_id}) + "\n"
            )


def load_events_jsonl(path) -> EventTimeline:
    events = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        events.append(TimelineEvent(t_ms=int(row["t_ms"]), kind=EventKind(row["kind"]), trial_id=row.get("trial_id")))
    return EventTimeline(events=events)


def save_ratings_csv(path, trial_rows: list[dict]) -> None:
    frame = pd.DataFrame(trial_rows, columns=RATINGS_COLUMNS)
    frame.to_csv(path, index=False)


def load_ratings_csv(path) -> list[dict]:
    frame = pd.read_csv(path, dtype={"trial_id": str, "clip_id": str})
    if list(frame.columns) != RATINGS_COLUMNS:
        raise SchemaError(f"ratings CSV columns must be {RATINGS_COLUMNS}, got {list(frame.columns)}")
    rows = []
    for record in frame.to_dict(orient="records"):
        if pd.isna(record["valence"]):
            record["rating"] = None
        else:
            record["rating"] = RatingTriple(
                valence=int(record["valence"]),
                arousal=int(record["arousal"]),
                liking=int(record["liking"]),
            )
        rows.append(record)
    return rows


def parse_stream_chunk(kind: str, text: str) -> np.ndarray:
    """Parse a POSTed CSV chunk (optional header) into a float matrix.

    EEG chunks have 3 columns, fNIRS chunks 17; anything else is a schema
    error.
    """
    expected = {"eeg": len(EEG_COLUMNS), "fnirs": len(FNIRS_COLUMNS)}.get(kind)
    if expected is None:
        raise InputError(f"unknown stream kind {kind!r}")
    rows = []
    for line_no, line in enumerate(text.strip().splitlines()):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if line_no == 0 and parts[0].strip() == "timestamp_ms":
            if len(parts) != expected:
                raise SchemaError(f"{kind} chunk header has {len(parts)} columns, expected {expected}")
            continue
        if len(parts) != expected:
            raise SchemaError(f"{kind} chunk row has {len(parts)} columns, expected {expected}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise SchemaError(f"{kind} chunk row {line_no}: {exc}") from None
    if not rows:
        raise SchemaError(f"empty {kind} chunk")
    return np.asarray(rows, dtype=np.float64)
