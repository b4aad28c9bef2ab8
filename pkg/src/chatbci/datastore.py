"""Recording container: on-disk format, loading, saving, and validation.

A recording lives in one directory with three files:

  meta.json    -- subject_id, session, sampling_rate_hz, channels, class_map
  signals.f32  -- raw little-endian float32, row-major channels x samples, in uV
  events.tsv   -- header row, then onset_sample / duration_samples / label

The binary layout is bit-exact by construction: save followed by load is the
identity on every float32-representable signal.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, IntegrityError, LabelError

CHANNEL_KINDS = ("EEG", "EOG")
SESSIONS = ("train", "eval")

# Default label -> index map used by the dataset conversion recipe.
DEFAULT_CLASS_MAP = {"left_hand": 0, "right_hand": 1, "feet": 2, "tongue": 3}

META_NAME = "meta.json"
SIGNALS_NAME = "signals.f32"
EVENTS_NAME = "events.tsv"


@dataclass(frozen=True)
class ChannelInfo:
    name: str
    kind: str  # "EEG" or "EOG"
    unit: str = "uV"

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise IntegrityError(f"unknown channel kind {self.kind!r} for {self.name!r}")


@dataclass(frozen=True)
class EventMarker:
    onset_sample: int
    duration_samples: int
    label: str

    def __post_init__(self):
        if self.onset_sample < 0 or self.duration_samples < 0:
            raise IntegrityError(
                f"event {self.label!r} has negative onset/duration "
                f"({self.onset_sample}, {self.duration_samples})"
            )


@dataclass
class Recording:
    """One subject-session of multichannel signal plus event markers.

    ``signal`` is held as float64 in memory (numerically exact for every
    float32 value from disk); it is written back as float32.
    Immutable by convention after load: operations return new instances.
    """

    subject_id: str
    session: str
    sampling_rate_hz: float
    channels: list[ChannelInfo]
    signal: np.ndarray  # (n_channels, n_samples), uV
    events: list[EventMarker]
    class_map: dict[str, int]

    def __post_init__(self):
        self.signal = np.asarray(self.signal, dtype=np.float64)
        if self.signal.ndim != 2:
            raise IntegrityError(f"signal must be 2-D, got shape {self.signal.shape}")
        if self.signal.shape[0] != len(self.channels):
            raise IntegrityError(
                f"signal has {self.signal.shape[0]} rows but {len(self.channels)} channels declared"
            )
        if self.session not in SESSIONS:
            raise IntegrityError(f"session must be one of {SESSIONS}, got {self.session!r}")
        if not (self.sampling_rate_hz > 0):
            raise IntegrityError(f"sampling_rate_hz must be positive, got {self.sampling_rate_hz}")
        names = [c.name for c in self.channels]
        if len(set(names)) != len(names):
            raise IntegrityError("channel names must be unique")
        n_classes = len(self.class_map)
        indices = sorted(self.class_map.values())
        if indices != list(range(n_classes)):
            raise IntegrityError(f"class indices must cover [0, {n_classes}), got {indices}")
        n = self.signal.shape[1]
        for ev in self.events:
            if ev.label not in self.class_map:
                raise LabelError(f"event label {ev.label!r} not in class map {sorted(self.class_map)}")
            if ev.onset_sample + ev.duration_samples > n:
                raise IntegrityError(
                    f"event {ev.label!r} at {ev.onset_sample} (+{ev.duration_samples}) "
                    f"exceeds recording length {n}"
                )
        self.events = sorted(self.events, key=lambda e: e.onset_sample)

    @property
    def n_channels(self) -> int:
        return self.signal.shape[0]

    @property
    def n_samples(self) -> int:
        return self.signal.shape[1]

    @property
    def channel_names(self) -> list[str]:
        return [c.name for c in self.channels]

    def channel_indices(self, kind: str) -> np.ndarray:
        return np.array([i for i, c in enumerate(self.channels) if c.kind == kind], dtype=int)

    def replace_signal(self, signal: np.ndarray) -> "Recording":
        """New Recording sharing metadata, with a different signal matrix."""
        return Recording(
            subject_id=self.subject_id,
            session=self.session,
            sampling_rate_hz=self.sampling_rate_hz,
            channels=list(self.channels),
            signal=signal,
            events=list(self.events),
            class_map=dict(self.class_map),
        )


@dataclass
class ValidationReport:
    nan_counts: dict[str, int]
    flat_segment_counts: dict[str, int]
    amplitude_ranges: dict[str, tuple[float, float]]
    class_event_counts: dict[str, int]
    all_flat_channels: list[str] = field(default_factory=list)
    passed: bool = False

    def to_dict(self) -> dict:
        return {
            "nan_counts": self.nan_counts,
            "flat_segment_counts": self.flat_segment_counts,
            "amplitude_ranges": {k: list(v) for k, v in self.amplitude_ranges.items()},
            "class_event_counts": self.class_event_counts,
            "all_flat_channels": self.all_flat_channels,
            "pass": self.passed,
        }


def load_recording(path: str | Path) -> Recording:
    """Load a recording directory, reconstructing the signal bit-exactly."""
    path = Path(path)
    meta_path = path / META_NAME
    signals_path = path / SIGNALS_NAME
    events_path = path / EVENTS_NAME
    for p in (meta_path, signals_path, events_path):
        if not p.is_file():
            raise FormatError(f"missing container file: {p}")

    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"unparseable {meta_path}: {exc}") from exc
    for key in ("subject_id", "session", "sampling_rate_hz", "channels", "class_map"):
        if key not in meta:
            raise FormatError(f"{meta_path} missing key {key!r}")

    channels = [ChannelInfo(name=c["name"], kind=c["kind"], unit=c.get("unit", "uV")) for c in meta["channels"]]
    class_map = {str(k): int(v) for k, v in meta["class_map"].items()}

    raw = signals_path.read_bytes()
    n_ch = len(channels)
    if n_ch == 0 or len(raw) % (4 * n_ch) != 0:
        raise IntegrityError(
            f"{signals_path} has {len(raw)} bytes, not divisible into {n_ch} float32 channels"
        )
    n_samples = len(raw) // (4 * n_ch)
    signal = np.frombuffer(raw, dtype="<f4").reshape(n_ch, n_samples)

    events = _read_events(events_path)
    for ev in events:
        if ev.label not in class_map:
            raise LabelError(f"event label {ev.label!r} not in class map {sorted(class_map)}")

    return Recording(
        subject_id=str(meta["subject_id"]),
        session=str(meta["session"]),
        sampling_rate_hz=float(meta["sampling_rate_hz"]),
        channels=channels,
        signal=signal,
        events=events,
        class_map=class_map,
    )


def _read_events(path: Path) -> list[EventMarker]:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise FormatError(f"{path} is empty (expected a header row)")
    header = lines[0].split("\t")
    if header[:3] != ["onset_sample", "duration_samples", "label"]:
        raise FormatError(f"{path} has unexpected header {header!r}")
    events = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"{path}:{i}: expected 3 tab-separated fields, got {len(parts)}")
        events.append(
            EventMarker(onset_sample=int(parts[0]), duration_samples=int(parts[1]), label=parts[2])
        )
    return events


def save_recording(rec: Recording, path: str | Path) -> None:
    """Write the three container files; round-trips bit-exactly via load."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "subject_id": rec.subject_id,
        "session": rec.session,
        "sampling_rate_hz": rec.sampling_rate_hz,
        "channels": [{"name": c.name, "kind": c.kind, "unit": c.unit} for c in rec.channels],
        "class_map": rec.class_map,
    }
    (path / META_NAME).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    (path / SIGNALS_NAME).write_bytes(np.ascontiguousarray(rec.signal, dtype="<f4").tobytes())
    rows = ["onset_sample\tduration_samples\tlabel"]
    rows += [f"{e.onset_sample}\t{e.duration_samples}\t{e.label}" for e in rec.events]
    (path / EVENTS_NAME).write_text("\n".join(rows) + "\n", encoding="utf-8")


def _flat_segments(x: np.ndarray, min_run: int) -> tuple[int, bool]:
    """Count maximal runs of >= min_run consecutive equal samples.

    Returns (count, all_flat). NaN samples never count as equal.
    """
    n = x.size
    if n == 0:
        return 0, False
    eq = (x[1:] == x[:-1])  # NaN != NaN, so NaN stretches break runs
    count = 0
    run = 1
    longest = 1
    for flag in eq:
        if flag:
            run += 1
        else:
            if run >= min_run:
                count += 1
            longest = max(longest, run)
            run = 1
    if run >= min_run:
        count += 1
    longest = max(longest, run)
    return count, longest == n


def validate(rec: Recording) -> ValidationReport:
    """Per-channel NaN / flat-segment / range checks plus per-class event counts.

    Problems are report content, never exceptions; the call is deterministic.
    A flat segment is a constant run lasting at least one second.
    """
    min_run = max(2, int(math.ceil(rec.sampling_rate_hz)))
    nan_counts: dict[str, int] = {}
    flat_counts: dict[str, int] = {}
    ranges: dict[str, tuple[float, float]] = {}
    all_flat: list[str] = []
    for idx, ch in enumerate(rec.channels):
        x = rec.signal[idx]
        nan_counts[ch.name] = int(np.isnan(x).sum())
        count, is_all_flat = _flat_segments(x, min_run)
        flat_counts[ch.name] = count
        if is_all_flat:
            all_flat.append(ch.name)
        finite = x[np.isfinite(x)]
        if finite.size:
            ranges[ch.name] = (float(finite.min()), float(finite.max()))
        else:
            ranges[ch.name] = (float("nan"), float("nan"))

    class_counts = {label: 0 for label in rec.class_map}
    for ev in rec.events:
        class_counts[ev.label] += 1

    passed = (
        sum(nan_counts.values()) == 0
        and all(v > 0 for v in class_counts.values())
        and not all_flat
    )
    return ValidationReport(
        nan_counts=nan_counts,
        flat_segment_counts=flat_counts,
        amplitude_ranges=ranges,
        class_event_counts=class_counts,
        all_flat_channels=all_flat,
        passed=passed,
    )


def find_recordings(data_dir: str | Path) -> list[Path]:
    """All recording directories (directories holding a meta.json) under data_dir."""
    root = Path(data_dir)
    if not root.is_dir():
        return []
    found = [p.parent for p in sorted(root.glob(f"*/{META_NAME}"))]
    if (root / META_NAME).is_file():
        found.insert(0, root)
    return found


def load_subject_sessions(data_dir: str | Path, subject_id: str) -> dict[str, Recording]:
    """Map session name -> Recording for one subject, read from the inventory."""
    sessions: dict[str, Recording] = {}
    for path in find_recordings(data_dir):
        meta = json.loads((path / META_NAME).read_text(encoding="utf-8"))
        if str(meta.get("subject_id")) == subject_id:
            rec = load_recording(path)
            sessions[rec.session] = rec
    return sessions
