"""Deterministic signal conditioning: re-referencing, filtering, epoching.

All operations are pure functions on immutable inputs; each returns a new
Recording or EpochSet and never mutates its argument.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.signal import butter, filtfilt

from .datastore import ChannelInfo, Recording
from .errors import BoundsError, PreconditionError, SpecError

FILTER_KINDS = ("lowpass", "highpass", "bandpass")


@dataclass(frozen=True)
class FilterSpec:
    """Butterworth filter description.

    Zero-phase filters run forward then backward: zero group delay and a
    squared magnitude response. Edge effects are handled by reflect-padding
    of three filter lengths.
    """

    kind: str
    cutoff_hz: float | tuple[float, float]
    order: int = 4
    zero_phase: bool = True

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise SpecError(f"filter kind must be one of {FILTER_KINDS}, got {self.kind!r}")
        if self.order < 1:
            raise SpecError(f"filter order must be positive, got {self.order}")
        cutoffs = self.cutoffs()
        if self.kind == "bandpass":
            if len(cutoffs) != 2:
                raise SpecError("bandpass needs two cutoffs (low, high)")
            if not cutoffs[0] < cutoffs[1]:
                raise SpecError(f"bandpass cutoffs must satisfy low < high, got {cutoffs}")
        elif len(cutoffs) != 1:
            raise SpecError(f"{self.kind} takes a single cutoff, got {cutoffs}")
        if any(c <= 0 for c in cutoffs):
            raise SpecError(f"cutoffs must be positive, got {cutoffs}")

    def cutoffs(self) -> tuple[float, ...]:
        if isinstance(self.cutoff_hz, (tuple, list)):
            return tuple(float(c) for c in self.cutoff_hz)
        return (float(self.cutoff_hz),)

    def validate_for(self, sampling_rate_hz: float) -> None:
        nyquist = sampling_rate_hz / 2.0
        for c in self.cutoffs():
            if c >= nyquist:
                raise SpecError(f"cutoff {c} Hz is not below the Nyquist frequency {nyquist} Hz")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "cutoff_hz": list(self.cutoffs()) if self.kind == "bandpass" else self.cutoffs()[0],
            "order": self.order,
            "zero_phase": self.zero_phase,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FilterSpec":
        cutoff = d["cutoff_hz"]
        if isinstance(cutoff, list):
            cutoff = tuple(cutoff)
        return cls(
            kind=d["kind"],
            cutoff_hz=cutoff,
            order=int(d.get("order", 4)),
            zero_phase=bool(d.get("zero_phase", True)),
        )


@dataclass
class EpochSet:
    """Trials x channels x samples tensor with per-trial class labels."""

    data: np.ndarray  # (n_trials, n_channels, n_samples), uV
    labels: np.ndarray  # (n_trials,), int class indices
    window_s: tuple[float, float]  # relative to the anchor event onset
    sampling_rate_hz: float
    channels: list[ChannelInfo]
    class_names: tuple[str, ...]  # index -> label

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.data.ndim != 3:
            raise SpecError(f"epoch data must be 3-D, got shape {self.data.shape}")
        if self.labels.shape[0] != self.data.shape[0]:
            raise SpecError(
                f"{self.labels.shape[0]} labels for {self.data.shape[0]} trials"
            )
        if self.data.shape[1] != len(self.channels):
            raise SpecError(
                f"data has {self.data.shape[1]} channels but {len(self.channels)} declared"
            )

    @property
    def n_trials(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def n_samples(self) -> int:
        return self.data.shape[2]

    @property
    def channel_names(self) -> list[str]:
        return [c.name for c in self.channels]

    def select_kinds(self, kinds: Iterable[str]) -> "EpochSet":
        """Sub-select channels by kind (e.g. EEG only for decoding)."""
        kinds = set(kinds)
        idx = [i for i, c in enumerate(self.channels) if c.kind in kinds]
        if not idx:
            raise PreconditionError(f"no channels of kind {sorted(kinds)} present")
        return EpochSet(
            data=self.data[:, idx, :].copy(),
            labels=self.labels.copy(),
            window_s=self.window_s,
            sampling_rate_hz=self.sampling_rate_hz,
            channels=[self.channels[i] for i in idx],
            class_names=self.class_names,
        )

    def subset(self, trial_idx: np.ndarray) -> "EpochSet":
        return EpochSet(
            data=self.data[trial_idx].copy(),
            labels=self.labels[trial_idx].copy(),
            window_s=self.window_s,
            sampling_rate_hz=self.sampling_rate_hz,
            channels=list(self.channels),
            class_names=self.class_names,
        )

    @classmethod
    def concat(cls, parts: Sequence["EpochSet"]) -> "EpochSet":
        """Stack trials from several epoch sets with identical layout."""
        if not parts:
            raise PreconditionError("cannot concatenate zero epoch sets")
        first = parts[0]
        for p in parts[1:]:
            if p.channel_names != first.channel_names or p.n_samples != first.n_samples:
                raise PreconditionError("epoch sets differ in channels or sample count")
            if p.class_names != first.class_names:
                raise PreconditionError("epoch sets differ in class names")
        return cls(
            data=np.concatenate([p.data for p in parts], axis=0),
            labels=np.concatenate([p.labels for p in parts], axis=0),
            window_s=first.window_s,
            sampling_rate_hz=first.sampling_rate_hz,
            channels=list(first.channels),
            class_names=first.class_names,
        )


def common_average_reference(rec: Recording) -> Recording:
    """Subtract the instantaneous mean over EEG channels from each EEG channel.

    EOG channels pass through untouched. After the call the EEG-channel mean
    is zero at every sample (up to float64 rounding); applying the operation
    twice equals applying it once.
    """
    eeg_idx = rec.channel_indices("EEG")
    if eeg_idx.size < 2:
        raise PreconditionError(
            f"common average reference needs at least 2 EEG channels, found {eeg_idx.size}"
        )
    signal = rec.signal.copy()
    mean = signal[eeg_idx].mean(axis=0)
    signal[eeg_idx] -= mean
    return rec.replace_signal(signal)


def filter_signal(rec: Recording, spec: FilterSpec) -> Recording:
    """Apply a Butterworth filter to every channel independently."""
    spec.validate_for(rec.sampling_rate_hz)
    cutoffs = spec.cutoffs()
    wn = [c / (rec.sampling_rate_hz / 2.0) for c in cutoffs]
    b, a = butter(spec.order, wn if spec.kind == "bandpass" else wn[0], btype=spec.kind)
    if spec.zero_phase:
        padlen = 3 * max(len(a), len(b))
        out = filtfilt(b, a, rec.signal, axis=1, padtype="even", padlen=padlen)
    else:
        from scipy.signal import lfilter

        out = lfilter(b, a, rec.signal, axis=1)
    return rec.replace_signal(out)


def epoch(
    rec: Recording,
    window_s: tuple[float, float],
    anchor: str | Iterable[str] | Callable[[str], bool] | None = None,
    baseline_s: tuple[float, float] | None = None,
) -> EpochSet:
    """Cut one trial per anchor event; values are copied verbatim.

    ``window_s`` is (start, end) in seconds relative to each event onset;
    trial sample k on channel c equals signal[c, onset + round(start*fs) + k].
    ``anchor`` filters events by label (string, collection, or predicate;
    None keeps every event). ``baseline_s`` optionally subtracts the
    per-trial per-channel mean over that window (also onset-relative).
    """
    start_s, end_s = float(window_s[0]), float(window_s[1])
    if not start_s < end_s:
        raise SpecError(f"window start must precede end, got {window_s}")
    fs = rec.sampling_rate_hz
    offset = int(round(start_s * fs))
    n_samples = int(round((end_s - start_s) * fs))
    if n_samples < 1:
        raise SpecError(f"window {window_s} spans no samples at fs={fs}")

    if anchor is None:
        keep = lambda label: True
    elif callable(anchor):
        keep = anchor
    elif isinstance(anchor, str):
        keep = lambda label: label == anchor
    else:
        allowed = set(anchor)
        keep = lambda label: label in allowed

    events = [ev for ev in rec.events if keep(ev.label)]
    out_of_bounds = [
        ev
        for ev in events
        if ev.onset_sample + offset < 0 or ev.onset_sample + offset + n_samples > rec.n_samples
    ]
    if out_of_bounds:
        preview = ", ".join(
            f"{ev.label}@{ev.onset_sample}" for ev in out_of_bounds[:5]
        )
        raise BoundsError(
            f"{len(out_of_bounds)} event window(s) fall outside the recording: {preview}",
            offending_events=out_of_bounds,
        )

    base_slice = None
    if baseline_s is not None:
        b0 = int(round(float(baseline_s[0]) * fs))
        b1 = int(round(float(baseline_s[1]) * fs))
        if not b0 < b1:
            raise SpecError(f"baseline window must be non-empty, got {baseline_s}")
        for ev in events:
            if ev.onset_sample + b0 < 0 or ev.onset_sample + b1 > rec.n_samples:
                raise BoundsError(
                    f"baseline window {baseline_s} outside recording for event at {ev.onset_sample}",
                    offending_events=[ev],
                )
        base_slice = (b0, b1)

    data = np.empty((len(events), rec.n_channels, n_samples), dtype=np.float64)
    labels = np.empty(len(events), dtype=np.int64)
    for t, ev in enumerate(events):
        lo = ev.onset_sample + offset
        data[t] = rec.signal[:, lo : lo + n_samples]
        if base_slice is not None:
            ref = rec.signal[:, ev.onset_sample + base_slice[0] : ev.onset_sample + base_slice[1]]
            data[t] -= ref.mean(axis=1, keepdims=True)
        labels[t] = rec.class_map[ev.label]

    class_names = tuple(
        name for name, _ in sorted(rec.class_map.items(), key=lambda kv: kv[1])
    )
    return EpochSet(
        data=data,
        labels=labels,
        window_s=(start_s, end_s),
        sampling_rate_hz=fs,
        channels=list(rec.channels),
        class_names=class_names,
    )
