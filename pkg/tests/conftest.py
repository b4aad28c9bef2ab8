import numpy as np
import pytest

from chatbci.datastore import (
    DEFAULT_CLASS_MAP,
    ChannelInfo,
    EventMarker,
    Recording,
    save_recording,
)
from chatbci.preprocess import EpochSet

CLASS_NAMES = tuple(sorted(DEFAULT_CLASS_MAP, key=DEFAULT_CLASS_MAP.get))


def make_channels(n_eeg: int = 3, n_eog: int = 1) -> list[ChannelInfo]:
    eeg_names = ["Fz", "C3", "Cz", "C4", "Pz", "P3", "P4", "Oz"]
    chans = [ChannelInfo(eeg_names[i % len(eeg_names)] + ("" if i < 8 else str(i)), "EEG")
             for i in range(n_eeg)]
    chans += [ChannelInfo(f"EOG{i + 1}", "EOG") for i in range(n_eog)]
    return chans


def make_recording(
    signal: np.ndarray,
    fs: float = 250.0,
    events: list[EventMarker] | None = None,
    channels: list[ChannelInfo] | None = None,
    subject_id: str = "S01",
    session: str = "train",
    class_map: dict | None = None,
) -> Recording:
    signal = np.asarray(signal, dtype=np.float64)
    if channels is None:
        channels = make_channels(n_eeg=signal.shape[0], n_eog=0)
    return Recording(
        subject_id=subject_id,
        session=session,
        sampling_rate_hz=fs,
        channels=channels,
        signal=signal,
        events=list(events or []),
        class_map=dict(class_map if class_map is not None else DEFAULT_CLASS_MAP),
    )


def noise_recording(
    n_eeg: int = 4,
    n_eog: int = 1,
    fs: float = 250.0,
    events_per_class: int = 3,
    trial_s: float = 2.0,
    gap_s: float = 0.5,
    seed: int = 0,
    subject_id: str = "S01",
    session: str = "train",
) -> Recording:
    """Random recording with evenly spaced cue events of all four classes."""
    rng = np.random.default_rng(seed)
    channels = make_channels(n_eeg, n_eog)
    n_events = events_per_class * len(CLASS_NAMES)
    step = int(round((trial_s + gap_s) * fs))
    trial_len = int(round(trial_s * fs))
    n_samples = step * n_events + step
    signal = rng.normal(0.0, 10.0, size=(len(channels), n_samples))
    events = []
    for i in range(n_events):
        label = CLASS_NAMES[i % len(CLASS_NAMES)]
        events.append(EventMarker(onset_sample=step // 2 + i * step,
                                  duration_samples=trial_len, label=label))
    return make_recording(signal, fs=fs, events=events, channels=channels,
                          subject_id=subject_id, session=session)


def separable_recording(
    n_trials_per_class: int = 200,
    fs: float = 250.0,
    trial_s: float = 2.0,
    gap_s: float = 0.2,
    tone_hz: float = 10.0,
    amps_ch0: tuple = (1.0, 2.0, 3.0, 4.0),
    amps_ch1: tuple = (4.0, 3.0, 2.0, 1.0),
    noise_sd: float = 1.0,
    seed: int = 0,
    subject_id: str = "S01",
    session: str = "train",
) -> Recording:
    """Class-dependent 10 Hz amplitude on channels 0 and 1; channels 2-3 noise."""
    rng = np.random.default_rng(seed)
    channels = make_channels(n_eeg=4, n_eog=0)
    n_events = n_trials_per_class * len(CLASS_NAMES)
    step = int(round((trial_s + gap_s) * fs))
    trial_len = int(round(trial_s * fs))
    n_samples = step * n_events + step
    signal = rng.normal(0.0, noise_sd, size=(4, n_samples))
    events = []
    order = rng.permutation(np.repeat(np.arange(len(CLASS_NAMES)), n_trials_per_class))
    t = np.arange(trial_len) / fs
    for i, ci in enumerate(order):
        onset = step // 2 + i * step
        phase = rng.uniform(0, 2 * np.pi)
        tone = np.sin(2 * np.pi * tone_hz * t + phase)
        signal[0, onset : onset + trial_len] += amps_ch0[ci] * tone
        signal[1, onset : onset + trial_len] += amps_ch1[ci] * tone
        events.append(EventMarker(onset_sample=onset, duration_samples=trial_len,
                                  label=CLASS_NAMES[ci]))
    return make_recording(signal, fs=fs, events=events, channels=channels,
                          subject_id=subject_id, session=session)


def make_epochs(
    data: np.ndarray,
    labels: np.ndarray,
    fs: float = 250.0,
    class_names: tuple = CLASS_NAMES,
    window_s: tuple = (0.0, 2.0),
) -> EpochSet:
    data = np.asarray(data, dtype=np.float64)
    return EpochSet(
        data=data,
        labels=np.asarray(labels, dtype=np.int64),
        window_s=window_s,
        sampling_rate_hz=fs,
        channels=make_channels(n_eeg=data.shape[1], n_eog=0),
        class_names=class_names,
    )


@pytest.fixture
def tiny_subject_dir(tmp_path):
    """On-disk dataset: one subject, train + eval sessions, small and fast."""
    data_dir = tmp_path / "data"
    for session, seed in (("train", 1), ("eval", 2)):
        rec = noise_recording(
            n_eeg=3, n_eog=1, events_per_class=3, trial_s=1.0, gap_s=0.3,
            seed=seed, subject_id="S01", session=session,
        )
        save_recording(rec, data_dir / f"S01_{session}")
    return data_dir


class CountingClock:
    """Deterministic logical clock for reproducible transcripts."""

    def __init__(self):
        self.t = 0.0

    def __call__(self) -> float:
        self.t += 1.0
        return self.t
