"""Exploratory analyses over epoched data: per-class channel statistics with
robust outlier flags, ERP averaging, and Welch power spectral density.

All results are plain arrays plus metadata and serialize to the nested
class -> channel -> array JSON schema used by the service and figure layers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyClassError, SpecError
from .preprocess import EpochSet

# Consistency factor relating the median absolute deviation of a normal
# sample to its standard deviation.
MAD_SIGMA = 1.4826


def _check_classes(ep: EpochSet) -> list[np.ndarray]:
    """Per-class trial index lists; raises if any declared class is empty."""
    groups = []
    for ci, name in enumerate(ep.class_names):
        idx = np.flatnonzero(ep.labels == ci)
        if idx.size == 0:
            raise EmptyClassError(f"class {name!r} has no trials")
        groups.append(idx)
    return groups


@dataclass
class ClassChannelStats:
    class_names: tuple[str, ...]
    channel_names: list[str]
    mean: np.ndarray  # (n_classes, n_channels), uV
    std: np.ndarray  # (n_classes, n_channels), uV
    variance: np.ndarray  # (n_classes, n_channels), uV^2
    outlier_flags: np.ndarray  # (n_trials,), bool
    outlier_k: float

    def to_dict(self) -> dict:
        per_class = {}
        for ci, cname in enumerate(self.class_names):
            per_class[cname] = {
                ch: {
                    "mean": float(self.mean[ci, j]),
                    "std": float(self.std[ci, j]),
                    "variance": float(self.variance[ci, j]),
                }
                for j, ch in enumerate(self.channel_names)
            }
        return {
            "classes": per_class,
            "outlier_flags": [bool(f) for f in self.outlier_flags],
            "outlier_k": self.outlier_k,
        }


@dataclass
class ErpResult:
    class_names: tuple[str, ...]
    channel_names: list[str]
    waveforms: np.ndarray  # (n_classes, n_channels, n_samples), uV
    trial_counts: dict[str, int]
    time_ms: np.ndarray  # relative to epoch start

    def to_dict(self) -> dict:
        return {
            "time_ms": self.time_ms.tolist(),
            "trial_counts": self.trial_counts,
            "classes": {
                cname: {
                    ch: self.waveforms[ci, j].tolist()
                    for j, ch in enumerate(self.channel_names)
                }
                for ci, cname in enumerate(self.class_names)
            },
        }


@dataclass
class PsdResult:
    class_names: tuple[str, ...]
    channel_names: list[str]
    density: np.ndarray  # (n_classes, n_channels, n_freqs), uV^2/Hz
    freqs_hz: np.ndarray
    segment_s: float
    overlap: float
    window: str

    def to_dict(self) -> dict:
        return {
            "freqs_hz": self.freqs_hz.tolist(),
            "welch": {"segment_s": self.segment_s, "overlap": self.overlap, "window": self.window},
            "classes": {
                cname: {
                    ch: self.density[ci, j].tolist()
                    for j, ch in enumerate(self.channel_names)
                }
                for ci, cname in enumerate(self.class_names)
            },
        }


def class_channel_stats(ep: EpochSet, outlier_k: float = 6.0) -> ClassChannelStats:
    """Mean/std/variance pooled over all samples of all trials of each class.

    A trial is flagged as an outlier iff, on any channel, its peak absolute
    deviation from that channel's median exceeds outlier_k times the
    channel's MAD-based robust standard deviation (MAD * 1.4826). The
    channel median and MAD are pooled over every trial.
    """
    groups = _check_classes(ep)
    n_classes, n_channels = len(ep.class_names), ep.n_channels
    mean = np.empty((n_classes, n_channels))
    var = np.empty((n_classes, n_channels))
    for ci, idx in enumerate(groups):
        block = ep.data[idx]  # (trials, channels, samples)
        flat = block.transpose(1, 0, 2).reshape(n_channels, -1)
        mean[ci] = flat.mean(axis=1)
        var[ci] = flat.var(axis=1)

    pooled = ep.data.transpose(1, 0, 2).reshape(n_channels, -1)
    center = np.median(pooled, axis=1)
    mad = np.median(np.abs(pooled - center[:, None]), axis=1)
    threshold = outlier_k * MAD_SIGMA * mad  # per channel
    deviation = np.abs(ep.data - center[None, :, None])
    peak = deviation.max(axis=2)  # (trials, channels)
    flags = (peak > threshold[None, :]).any(axis=1)

    return ClassChannelStats(
        class_names=ep.class_names,
        channel_names=ep.channel_names,
        mean=mean,
        std=np.sqrt(var),
        variance=var,
        outlier_flags=flags,
        outlier_k=float(outlier_k),
    )


def erp(ep: EpochSet) -> ErpResult:
    """Pointwise arithmetic mean across each class's trials, per channel."""
    groups = _check_classes(ep)
    waveforms = np.stack([ep.data[idx].mean(axis=0) for idx in groups])
    counts = {name: int(idx.size) for name, idx in zip(ep.class_names, groups)}
    time_ms = np.arange(ep.n_samples) / ep.sampling_rate_hz * 1000.0
    return ErpResult(
        class_names=ep.class_names,
        channel_names=ep.channel_names,
        waveforms=waveforms,
        trial_counts=counts,
        time_ms=time_ms,
    )


def _hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def psd(
    ep: EpochSet,
    segment_s: float = 1.0,
    overlap: float = 0.5,
    window: str = "hann",
) -> PsdResult:
    """Welch density averaged over all segments of all trials of each class.

    Segments are mean-detrended and Hann-windowed; one-sided density is
    normalized so that the integral over frequency approximates the signal
    variance (sum(density) * df ~ var).
    """
    if window != "hann":
        raise SpecError(f"unsupported window {window!r} (only 'hann')")
    if not (0.0 <= overlap < 1.0):
        raise SpecError(f"overlap must be in [0, 1), got {overlap}")
    fs = ep.sampling_rate_hz
    nperseg = int(round(segment_s * fs))
    if nperseg < 8:
        raise SpecError(f"segment of {segment_s}s spans {nperseg} samples; need >= 8")
    if nperseg > ep.n_samples:
        raise SpecError(
            f"segment of {nperseg} samples exceeds epoch length {ep.n_samples}"
        )
    step = max(1, nperseg - int(round(overlap * nperseg)))
    groups = _check_classes(ep)

    win = _hann_periodic(nperseg)
    norm = 1.0 / (fs * np.sum(win**2))
    n_freqs = nperseg // 2 + 1
    freqs = np.arange(n_freqs) * fs / nperseg

    starts = list(range(0, ep.n_samples - nperseg + 1, step))
    density = np.zeros((len(ep.class_names), ep.n_channels, n_freqs))
    for ci, idx in enumerate(groups):
        acc = np.zeros((ep.n_channels, n_freqs))
        n_segments = 0
        for t in idx:
            for s0 in starts:
                seg = ep.data[t, :, s0 : s0 + nperseg]
                seg = seg - seg.mean(axis=1, keepdims=True)
                spec = np.fft.rfft(seg * win[None, :], axis=1)
                p = norm * np.abs(spec) ** 2
                p[:, 1:] *= 2.0
                if nperseg % 2 == 0:
                    p[:, -1] /= 2.0  # Nyquist bin is not duplicated
                acc += p
                n_segments += 1
        density[ci] = acc / n_segments

    return PsdResult(
        class_names=ep.class_names,
        channel_names=ep.channel_names,
        density=density,
        freqs_hz=freqs,
        segment_s=float(segment_s),
        overlap=float(overlap),
        window=window,
    )
