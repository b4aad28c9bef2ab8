"""Within-subject training: stratified split, augmentation, the fit loop with
early stopping on validation accuracy, and run artifacts on disk.

A run directory holds exactly four files: config.json, metrics.jsonl (one
epoch record per line), best.ckpt, and confusion.json. The eval session is
loaded once, hashed, and touched only by the single final evaluation.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .datastore import Recording, load_subject_sessions
from .decoder import model as dm
from .decoder.model import DecoderConfig, DecoderModel
from .errors import PreconditionError, SplitError
from .preprocess import EpochSet, FilterSpec, common_average_reference, epoch, filter_signal

RUN_STATUSES = ("running", "finished", "failed", "stopped")


@dataclass(frozen=True)
class AugmentSpec:
    """Per-trial stochastic transforms applied independently in train mode."""

    noise_p: float = 0.5
    noise_sigma_scale: float = 0.1  # times the per-channel training-set SD
    shift_p: float = 0.5
    shift_max_s: float = 0.25  # circular, +/- seconds
    channel_dropout_p: float = 0.05  # per channel

    def __post_init__(self):
        for name in ("noise_p", "shift_p", "channel_dropout_p"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise PreconditionError(f"{name} must be in [0, 1], got {v}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentSpec":
        return cls(**d)

    @classmethod
    def disabled(cls) -> "AugmentSpec":
        return cls(noise_p=0.0, shift_p=0.0, channel_dropout_p=0.0)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 200
    early_stop_patience: int = 30
    val_fraction: float = 0.2
    augment: AugmentSpec = field(default_factory=AugmentSpec)
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.val_fraction < 1.0):
            raise PreconditionError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if self.early_stop_patience > self.max_epochs:
            raise PreconditionError("early_stop_patience must not exceed max_epochs")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["augment"] = self.augment.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "augment" in d and isinstance(d["augment"], dict):
            d["augment"] = AugmentSpec.from_dict(d["augment"])
        return cls(**d)


@dataclass(frozen=True)
class PipelineConfig:
    """Signal conditioning applied identically to both sessions before decoding."""

    car: bool = True
    filters: tuple[FilterSpec, ...] = (FilterSpec("lowpass", 40.0),)
    window_s: tuple[float, float] = (0.0, 4.0)

    def to_dict(self) -> dict:
        return {
            "car": self.car,
            "filters": [f.to_dict() for f in self.filters],
            "window_s": list(self.window_s),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return cls(
            car=bool(d.get("car", True)),
            filters=tuple(FilterSpec.from_dict(f) for f in d.get("filters", [])),
            window_s=tuple(d.get("window_s", (0.0, 4.0))),
        )


@dataclass
class TrainRun:
    run_id: str
    subject_id: str
    status: str = "running"
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_acc: float = 0.0
    eval_accuracy: float | None = None
    confusion: list[list[int]] | None = None
    failed_epoch: int | None = None
    audit: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "subject_id": self.subject_id,
            "status": self.status,
            "epochs": self.epochs,
            "best_epoch": self.best_epoch,
            "best_val_acc": self.best_val_acc,
            "eval_accuracy": self.eval_accuracy,
            "confusion": self.confusion,
            "failed_epoch": self.failed_epoch,
            "audit": self.audit,
        }


def split(ep: EpochSet, val_fraction: float, seed: int) -> tuple[EpochSet, EpochSet]:
    """Stratified train/validation partition, deterministic under seed.

    Per-class validation counts follow round(fraction * class_count) with
    ties going to even (banker's rounding).
    """
    if not (0.0 < val_fraction < 1.0):
        raise PreconditionError(f"val_fraction must be in (0, 1), got {val_fraction}")
    rng = np.random.default_rng(seed)
    val_idx: list[np.ndarray] = []
    train_idx: list[np.ndarray] = []
    for ci, name in enumerate(ep.class_names):
        idx = np.flatnonzero(ep.labels == ci)
        if idx.size < 2:
            raise SplitError(
                f"class {name!r} has {idx.size} trial(s); need at least 2 to split"
            )
        n_val = round(val_fraction * idx.size)
        shuffled = rng.permutation(idx)
        val_idx.append(shuffled[:n_val])
        train_idx.append(shuffled[n_val:])
    val = np.sort(np.concatenate(val_idx))
    train = np.sort(np.concatenate(train_idx))
    return ep.subset(train), ep.subset(val)


class Augmenter:
    """Applies an AugmentSpec to training batches.

    ``channel_sd`` is the per-channel standard deviation of the training
    set; the Gaussian noise sigma is spec.noise_sigma_scale times it.
    """

    def __init__(self, spec: AugmentSpec, sampling_rate_hz: float, channel_sd: np.ndarray):
        self.spec = spec
        self.max_shift = int(round(spec.shift_max_s * sampling_rate_hz))
        self.sigma = spec.noise_sigma_scale * np.asarray(channel_sd, dtype=np.float64)

    def __call__(self, batch: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        out = batch.copy()
        n = out.shape[0]
        spec = self.spec
        for t in range(n):
            if spec.shift_p > 0.0 and rng.random() < spec.shift_p and self.max_shift > 0:
                shift = int(rng.integers(-self.max_shift, self.max_shift + 1))
                out[t] = np.roll(out[t], shift, axis=1)
            if spec.noise_p > 0.0 and rng.random() < spec.noise_p:
                out[t] += rng.normal(size=out[t].shape) * self.sigma[:, None]
            if spec.channel_dropout_p > 0.0:
                drop = rng.random(out.shape[1]) < spec.channel_dropout_p
                out[t, drop, :] = 0.0
        return out


def augment(batch: np.ndarray, spec: AugmentSpec, rng: np.random.Generator,
            sampling_rate_hz: float = 250.0,
            channel_sd: np.ndarray | None = None) -> np.ndarray:
    """One-shot convenience wrapper around Augmenter; labels are untouched."""
    if channel_sd is None:
        channel_sd = batch.std(axis=(0, 2))
    return Augmenter(spec, sampling_rate_hz, channel_sd)(batch, rng)


class Adam:
    """Adaptive-moment estimation over a dict of named parameter arrays."""

    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}
        self.v = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, p in params.items():
            g = grads[k].astype(np.float64)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            update = (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)
            p -= (self.lr * update).astype(p.dtype)


@dataclass
class FitResult:
    history: list[dict]
    best_epoch: int
    best_val_acc: float
    status: str
    failed_epoch: int | None = None
    batches_drawn: int = 0
    trials_seen: int = 0


def _accuracy(model: DecoderModel, data: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """(loss, accuracy) in eval mode, batched."""
    losses = []
    correct = 0
    for lo in range(0, data.shape[0], 256):
        xb = data[lo : lo + 256]
        yb = labels[lo : lo + 256]
        logits = dm.forward(model, xb, train_mode=False)
        loss, _ = dm.softmax_cross_entropy(logits, yb)
        losses.append(loss * xb.shape[0])
        correct += int((np.argmax(logits, axis=1) == yb).sum())
    n = data.shape[0]
    return float(np.sum(losses) / n), correct / n


def fit(
    model: DecoderModel,
    train_ep: EpochSet,
    val_ep: EpochSet,
    cfg: TrainConfig,
    augmenter: Augmenter | None = None,
    on_epoch: Callable[[dict], None] | None = None,
    should_stop: Callable[[], bool] | None = None,
) -> FitResult:
    """Minimize softmax cross-entropy with Adam; early-stop on val accuracy.

    The best-validation-accuracy parameter snapshot is restored into the
    model before returning. Only ``train_ep`` trials ever produce gradients.
    """
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params, lr=cfg.learning_rate)
    x_train = train_ep.data
    y_train = train_ep.labels
    best_params = model.copy_params()
    best_buffers = model.copy_buffers()
    best_epoch, best_val = -1, -1.0
    history: list[dict] = []
    status = "finished"
    failed_epoch = None
    batches_drawn = 0
    trials_seen = 0

    for ep_i in range(cfg.max_epochs):
        if should_stop is not None and should_stop():
            status = "stopped"
            break
        perm = rng.permutation(x_train.shape[0])
        ep_loss = 0.0
        ep_correct = 0
        diverged = False
        for lo in range(0, perm.size, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            xb = x_train[idx]
            if augmenter is not None:
                xb = augmenter(xb, rng)
            yb = y_train[idx]
            logits, cache = dm.forward_cache(model, xb, train_mode=True, rng=rng)
            loss, dlogits = dm.softmax_cross_entropy(logits, yb)
            batches_drawn += 1
            trials_seen += idx.size
            if not np.isfinite(loss):
                diverged = True
                break
            grads = dm.backward(model, cache, dlogits)
            opt.step(model.params, grads)
            ep_loss += loss * idx.size
            ep_correct += int((np.argmax(logits, axis=1) == yb).sum())
        if diverged:
            status = "failed"
            failed_epoch = ep_i
            break

        val_loss, val_acc = _accuracy(model, val_ep.data, val_ep.labels)
        record = {
            "epoch": ep_i,
            "train_loss": ep_loss / perm.size,
            "train_acc": ep_correct / perm.size,
            "val_loss": val_loss,
            "val_acc": val_acc,
        }
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if val_acc > best_val:
            best_val = val_acc
            best_epoch = ep_i
            best_params = model.copy_params()
            best_buffers = model.copy_buffers()
        elif ep_i - best_epoch >= cfg.early_stop_patience:
            break

    if best_epoch >= 0:
        model.load_state(best_params, best_buffers)
    return FitResult(
        history=history,
        best_epoch=best_epoch,
        best_val_acc=max(best_val, 0.0),
        status=status,
        failed_epoch=failed_epoch,
        batches_drawn=batches_drawn,
        trials_seen=trials_seen,
    )


def _hash_epochs(ep: EpochSet) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(ep.data).tobytes())
    h.update(np.ascontiguousarray(ep.labels).tobytes())
    return h.hexdigest()


def confusion_matrix(true: np.ndarray, pred: np.ndarray, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(true, pred):
        cm[t, p] += 1
    return cm


def prepare_epochs(rec: Recording, pipeline: PipelineConfig, include_eog: bool) -> EpochSet:
    """Condition one session and epoch it on the cue events."""
    out = rec
    if pipeline.car:
        out = common_average_reference(out)
    for spec in pipeline.filters:
        out = filter_signal(out, spec)
    ep = epoch(out, pipeline.window_s)
    return ep if include_eog else ep.select_kinds(["EEG"])


def train(
    subject_id: str,
    decoder_cfg: dict | DecoderConfig,
    train_cfg: TrainConfig,
    data_dir: str | Path,
    out_dir: str | Path,
    pipeline: PipelineConfig | None = None,
    run_id: str | None = None,
    should_stop: Callable[[], bool] | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainRun:
    """Full within-subject run: fit on the train session, evaluate once on eval.

    ``decoder_cfg`` may omit n_channels/n_samples; they are read from the
    prepared data. Writes config.json, metrics.jsonl, best.ckpt and
    confusion.json under out_dir/run_id.
    """
    pipeline = pipeline or PipelineConfig()
    sessions = load_subject_sessions(data_dir, subject_id)
    for required in ("train", "eval"):
        if required not in sessions:
            raise PreconditionError(
                f"subject {subject_id!r} has no {required!r} session under {data_dir}"
            )

    overrides = decoder_cfg.to_dict() if isinstance(decoder_cfg, DecoderConfig) else dict(decoder_cfg)
    include_eog = bool(overrides.get("include_eog", False))
    train_full = prepare_epochs(sessions["train"], pipeline, include_eog)
    eval_ep = prepare_epochs(sessions["eval"], pipeline, include_eog)

    overrides["n_channels"] = train_full.n_channels
    overrides["n_samples"] = train_full.n_samples
    overrides["include_eog"] = include_eog
    cfg = DecoderConfig.from_dict(overrides)

    if run_id is None:
        digest = hashlib.sha256(
            json.dumps(
                {"subject": subject_id, "decoder": cfg.to_dict(), "train": train_cfg.to_dict()},
                sort_keys=True,
            ).encode()
        ).hexdigest()[:10]
        run_id = f"run-{subject_id}-{digest}"

    run_dir = Path(out_dir) / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    run = TrainRun(run_id=run_id, subject_id=subject_id)

    (run_dir / "config.json").write_text(
        json.dumps(
            {
                "subject_id": subject_id,
                "decoder": cfg.to_dict(),
                "train": train_cfg.to_dict(),
                "pipeline": pipeline.to_dict(),
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )

    train_ep, val_ep = split(train_full, train_cfg.val_fraction, train_cfg.seed)
    model = dm.build(cfg, seed=train_cfg.seed)
    spec = train_cfg.augment
    augmenter = None
    if spec.noise_p > 0 or spec.shift_p > 0 or spec.channel_dropout_p > 0:
        augmenter = Augmenter(spec, train_ep.sampling_rate_hz, train_ep.data.std(axis=(0, 2)))

    eval_hash_before = _hash_epochs(eval_ep)
    metrics_path = run_dir / "metrics.jsonl"
    metrics_path.write_text("", encoding="utf-8")  # re-running a run_id never appends

    def record_epoch(rec_dict: dict) -> None:
        run.epochs.append(rec_dict)
        with metrics_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec_dict) + "\n")
        if on_epoch is not None:
            on_epoch(rec_dict)

    t0 = time.perf_counter()
    try:
        result = fit(
            model, train_ep, val_ep, train_cfg,
            augmenter=augmenter, on_epoch=record_epoch, should_stop=should_stop,
        )
    except KeyboardInterrupt:
        run.status = "stopped"
        return run

    run.best_epoch = result.best_epoch
    run.best_val_acc = result.best_val_acc
    run.status = result.status
    run.failed_epoch = result.failed_epoch
    dm.save_checkpoint(model, run_dir / "best.ckpt")

    if result.status == "finished":
        pred = dm.predict(model, eval_ep.data)
        cm = confusion_matrix(eval_ep.labels, pred, cfg.n_classes)
        run.eval_accuracy = float((pred == eval_ep.labels).mean())
        run.confusion = cm.tolist()
        (run_dir / "confusion.json").write_text(
            json.dumps(
                {
                    "confusion": run.confusion,
                    "eval_accuracy": run.eval_accuracy,
                    "class_names": list(eval_ep.class_names),
                },
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
    else:
        (run_dir / "confusion.json").write_text(
            json.dumps({"confusion": None, "eval_accuracy": None}) + "\n", encoding="utf-8"
        )

    run.audit = {
        "eval_hash_before": eval_hash_before,
        "eval_hash_after": _hash_epochs(eval_ep),
        "train_trials": int(train_ep.n_trials),
        "val_trials": int(val_ep.n_trials),
        "eval_trials": int(eval_ep.n_trials),
        "batches_drawn": result.batches_drawn,
        "trials_seen": result.trials_seen,
        "wall_s": time.perf_counter() - t0,
    }
    return run
