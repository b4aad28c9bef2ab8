"""Declarative figure rendering for ERP grids and training curves.

Every render produces raster bytes plus a sidecar JSON holding the exact
plotted arrays; correctness is always asserted on the sidecar, never on
pixels. Figure ids are content hashes of the sidecar, so identical inputs
produce identical ids.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 - backend must be set first

from .analysis import ErpResult
from .errors import SpecError
from .training import TrainRun

DEFAULT_ERP_CHANNELS = ("Fz", "C3", "Cz", "C4", "Pz", "EOG1", "EOG3")

# Fixed injective class -> color map.
CLASS_COLORS = {
    "left_hand": "#1f77b4",
    "right_hand": "#d62728",
    "feet": "#2ca02c",
    "tongue": "#9467bd",
}
_FALLBACK_COLORS = ("#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


@dataclass(frozen=True)
class ErpFigureSpec:
    channels: tuple[str, ...] = DEFAULT_ERP_CHANNELS
    fixation_window_ms: tuple[float, float] | None = (0.0, 2000.0)
    cue_onset_ms: float | None = 2000.0
    cue_duration_ms: float = 1250.0
    xlim_ms: tuple[float, float] | None = None  # zoom window, None = full epoch

    def to_dict(self) -> dict:
        return {
            "channels": list(self.channels),
            "fixation_window_ms": list(self.fixation_window_ms) if self.fixation_window_ms else None,
            "cue_onset_ms": self.cue_onset_ms,
            "cue_duration_ms": self.cue_duration_ms,
            "xlim_ms": list(self.xlim_ms) if self.xlim_ms else None,
        }


@dataclass(frozen=True)
class CurvesFigureSpec:
    max_cols: int = 3


@dataclass
class RenderedFigure:
    figure_id: str
    png_bytes: bytes
    sidecar: dict
    kind: str = "figure"

    def save(self, directory: str | Path) -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        png = directory / f"{self.figure_id}.png"
        data = directory / f"{self.figure_id}.data.json"
        png.write_bytes(self.png_bytes)
        data.write_text(json.dumps(self.sidecar, indent=2) + "\n", encoding="utf-8")
        return png, data


def _figure_id(sidecar: dict, prefix: str) -> str:
    digest = hashlib.sha256(json.dumps(sidecar, sort_keys=True).encode()).hexdigest()[:10]
    return f"{prefix}-{digest}"


def class_color(name: str, index: int) -> str:
    return CLASS_COLORS.get(name, _FALLBACK_COLORS[index % len(_FALLBACK_COLORS)])


def erp_figure(erp: ErpResult, spec: ErpFigureSpec | None = None) -> RenderedFigure:
    """One subplot per spec channel, one trace per class, with cue/fixation
    overlays; the sidecar carries the plotted arrays bit-exactly."""
    spec = spec or ErpFigureSpec()
    unknown = [ch for ch in spec.channels if ch not in erp.channel_names]
    if unknown:
        raise SpecError(f"spec channels not in result: {unknown}")

    colors = {
        name: class_color(name, i) for i, name in enumerate(erp.class_names)
    }
    sidecar = {
        "kind": "erp",
        "spec": spec.to_dict(),
        "time_ms": erp.time_ms.tolist(),
        "trial_counts": erp.trial_counts,
        "colors": colors,
        "classes": {},
    }
    ch_index = {name: j for j, name in enumerate(erp.channel_names)}
    for ci, cname in enumerate(erp.class_names):
        sidecar["classes"][cname] = {
            ch: erp.waveforms[ci, ch_index[ch]].tolist() for ch in spec.channels
        }

    n = len(spec.channels)
    fig, axes = plt.subplots(n, 1, figsize=(8, 1.8 * n), sharex=True, squeeze=False)
    for row, ch in enumerate(spec.channels):
        ax = axes[row, 0]
        if spec.fixation_window_ms is not None:
            ax.axvspan(*spec.fixation_window_ms, color="0.85", zorder=0)
        if spec.cue_onset_ms is not None:
            ax.axvspan(
                spec.cue_onset_ms,
                spec.cue_onset_ms + spec.cue_duration_ms,
                facecolor="none",
                edgecolor="black",
                lw=1.0,
                zorder=1,
            )
        for cname in erp.class_names:
            ax.plot(
                erp.time_ms,
                sidecar["classes"][cname][ch],
                color=colors[cname],
                lw=0.9,
                label=cname,
            )
        ax.set_ylabel(f"{ch}\n(uV)", fontsize=8)
        if spec.xlim_ms is not None:
            ax.set_xlim(*spec.xlim_ms)
    axes[-1, 0].set_xlabel("time (ms)")
    axes[0, 0].legend(fontsize=7, ncol=4, loc="upper right")
    fig.tight_layout()
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=110)
    plt.close(fig)

    return RenderedFigure(
        figure_id=_figure_id(sidecar, "erp"),
        png_bytes=buf.getvalue(),
        sidecar=sidecar,
        kind="erp",
    )


def curves_figure(runs: list[TrainRun], spec: CurvesFigureSpec | None = None) -> RenderedFigure:
    """Grid of per-run panels with train/val accuracy and loss vs. epoch."""
    spec = spec or CurvesFigureSpec()
    if not runs:
        raise SpecError("curves figure needs at least one run")
    for run in runs:
        if not run.epochs:
            raise SpecError(f"run {run.run_id} has no metrics to plot")

    sidecar = {"kind": "curves", "runs": {}}
    for run in runs:
        sidecar["runs"][run.run_id] = {
            "subject_id": run.subject_id,
            "eval_accuracy": run.eval_accuracy,
            "epochs": run.epochs,
        }

    n = len(runs)
    cols = min(spec.max_cols, n)
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(4 * cols, 3 * rows), squeeze=False)
    for i, run in enumerate(runs):
        ax = axes[i // cols][i % cols]
        epochs = [r["epoch"] for r in run.epochs]
        ax.plot(epochs, [r["train_acc"] for r in run.epochs], label="train acc", color="#1f77b4")
        ax.plot(epochs, [r["val_acc"] for r in run.epochs], label="val acc", color="#d62728")
        ax2 = ax.twinx()
        ax2.plot(epochs, [r["train_loss"] for r in run.epochs], "--", color="#1f77b4", alpha=0.5)
        ax2.plot(epochs, [r["val_loss"] for r in run.epochs], "--", color="#d62728", alpha=0.5)
        title = run.run_id
        if run.eval_accuracy is not None:
            title += f" (eval {run.eval_accuracy:.2f})"
        ax.set_title(title, fontsize=9)
        ax.set_xlabel("epoch")
        ax.set_ylabel("accuracy")
        ax.set_ylim(0.0, 1.05)
        ax.legend(fontsize=7)
    for j in range(n, rows * cols):
        axes[j // cols][j % cols].axis("off")
    fig.tight_layout()
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=110)
    plt.close(fig)

    return RenderedFigure(
        figure_id=_figure_id(sidecar, "curves"),
        png_bytes=buf.getvalue(),
        sidecar=sidecar,
        kind="curves",
    )
