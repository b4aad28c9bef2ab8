"""Compact convolutional decoder with hand-written forward/backward passes.

Default architecture (sizes from DecoderConfig):

  temporal conv (valid) -> spatial conv collapsing the channel axis
  -> batch norm -> SWISH -> average pool -> dropout -> flatten -> affine

``conv_order="spatial_first"`` swaps the first two stages (spatial collapse
of the raw channels, then a map-combining temporal conv) so the ordering
choice stays testable. Parameters are plain named NumPy arrays so that
initialization, updates and checkpoints stay fully deterministic. The hot
conv/pool kernels dispatch through ``kernels`` (compiled extension or NumPy
fallback); the spatial-first variant runs on NumPy only.
"""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, ShapeError
from . import kernels

BN_EPS = 1e-5
BN_MOMENTUM = 0.1

# Checkpoint layout: the arrays below, in this order, as raw little-endian
# float32 (trainable parameters first, then the batch-norm buffers).
PARAM_ORDER = (
    "temporal_w",
    "temporal_b",
    "spatial_w",
    "spatial_b",
    "bn_gamma",
    "bn_beta",
    "fc_w",
    "fc_b",
)
BUFFER_ORDER = ("bn_mean", "bn_var")
CHECKPOINT_MAGIC = b"CBCK1\n"


CONV_ORDERS = ("temporal_first", "spatial_first")


@dataclass(frozen=True)
class DecoderConfig:
    n_channels: int
    n_samples: int
    n_classes: int = 4
    temporal_filters: int = 8
    temporal_kernel: int = 25
    spatial_filters: int = 16
    pool_length: int = 150
    pool_stride: int = 15
    dropout_p: float = 0.5
    include_eog: bool = False
    conv_order: str = "temporal_first"

    def __post_init__(self):
        if self.conv_order not in CONV_ORDERS:
            raise ConfigError(f"conv_order must be one of {CONV_ORDERS}, got {self.conv_order!r}")
        counts = (
            self.n_channels,
            self.n_samples,
            self.n_classes,
            self.temporal_filters,
            self.temporal_kernel,
            self.spatial_filters,
            self.pool_length,
            self.pool_stride,
        )
        if any(v < 1 for v in counts):
            raise ConfigError(f"all size fields must be positive, got {self}")
        if not (0.0 <= self.dropout_p < 1.0):
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.conv_len < self.pool_length:
            raise ConfigError(
                f"n_samples={self.n_samples} too short: after the length-"
                f"{self.temporal_kernel} temporal kernel only {self.conv_len} samples "
                f"remain, fewer than pool_length={self.pool_length}"
            )

    @property
    def conv_len(self) -> int:
        return self.n_samples - self.temporal_kernel + 1

    @property
    def pool_out(self) -> int:
        return (self.conv_len - self.pool_length) // self.pool_stride + 1

    @property
    def n_features(self) -> int:
        return self.spatial_filters * self.pool_out

    def param_count(self) -> int:
        f1, k = self.temporal_filters, self.temporal_kernel
        f2, c = self.spatial_filters, self.n_channels
        if self.conv_order == "temporal_first":
            stage1, stage2 = f1 * k + f1, f2 * f1 * c + f2
        else:  # spatial collapse first, then a map-combining temporal conv
            stage1, stage2 = f1 * c + f1, f2 * f1 * k + f2
        return stage1 + stage2 + 2 * f2 + self.n_classes * self.n_features + self.n_classes

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DecoderConfig":
        return cls(**d)


@dataclass
class DecoderModel:
    config: DecoderConfig
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray]
    dtype: np.dtype = field(default=np.dtype(np.float32))

    def param_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def copy_buffers(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.buffers.items()}

    def load_state(self, params: dict[str, np.ndarray], buffers: dict[str, np.ndarray]) -> None:
        for k in self.params:
            self.params[k][...] = params[k]
        for k in self.buffers:
            self.buffers[k][...] = buffers[k]


def build(config: DecoderConfig, seed: int, dtype=np.float32) -> DecoderModel:
    """Deterministically initialized model: same seed, same bits."""
    rng = np.random.default_rng(seed)
    f1, k = config.temporal_filters, config.temporal_kernel
    f2, c = config.spatial_filters, config.n_channels
    nf, nc = config.n_features, config.n_classes
    dt = np.dtype(dtype)

    def normal(shape, std):
        return rng.normal(0.0, std, size=shape).astype(dt)

    if config.conv_order == "temporal_first":
        temporal_w = normal((f1, k), np.sqrt(2.0 / k))
        spatial_w = normal((f2, f1, c), np.sqrt(2.0 / (f1 * c)))
    else:
        spatial_w = normal((f1, c), np.sqrt(2.0 / c))
        temporal_w = normal((f2, f1, k), np.sqrt(2.0 / (f1 * k)))
    params = {
        "temporal_w": temporal_w,
        "temporal_b": np.zeros(f1 if config.conv_order == "temporal_first" else f2, dtype=dt),
        "spatial_w": spatial_w,
        "spatial_b": np.zeros(f2 if config.conv_order == "temporal_first" else f1, dtype=dt),
        "bn_gamma": np.ones(f2, dtype=dt),
        "bn_beta": np.zeros(f2, dtype=dt),
        "fc_w": normal((nc, nf), np.sqrt(2.0 / (nf + nc))),
        "fc_b": np.zeros(nc, dtype=dt),
    }
    buffers = {
        "bn_mean": np.zeros(f2, dtype=dt),
        "bn_var": np.ones(f2, dtype=dt),
    }
    return DecoderModel(config=config, params=params, buffers=buffers, dtype=dt)


def swish(x: np.ndarray) -> np.ndarray:
    """x * sigmoid(x); the model's activation."""
    return x / (1.0 + np.exp(-x))


def forward(
    model: DecoderModel,
    batch: np.ndarray,
    train_mode: bool,
    rng: np.random.Generator | None = None,
    update_running: bool | None = None,
) -> np.ndarray:
    """Logits for a (trials, channels, samples) batch.

    Dropout is active only in train mode (requires ``rng``); eval mode is a
    pure function of (parameters, input). ``update_running`` controls the
    batch-norm running statistics and defaults to ``train_mode``.
    """
    logits, _ = forward_cache(model, batch, train_mode, rng=rng, update_running=update_running)
    return logits


def forward_cache(
    model: DecoderModel,
    batch: np.ndarray,
    train_mode: bool,
    rng: np.random.Generator | None = None,
    update_running: bool | None = None,
) -> tuple[np.ndarray, dict]:
    cfg = model.config
    x = np.asarray(batch)
    if x.ndim != 3 or x.shape[1] != cfg.n_channels or x.shape[2] != cfg.n_samples:
        raise ShapeError(
            f"expected batch of shape (n, {cfg.n_channels}, {cfg.n_samples}), got {x.shape}"
        )
    x = np.ascontiguousarray(x, dtype=model.dtype)
    if update_running is None:
        update_running = train_mode
    p = model.params

    if cfg.conv_order == "temporal_first":
        stage1 = kernels.temporal_conv_fwd(x, p["temporal_w"])  # (N, F1, C, T1)
        stage1 += p["temporal_b"][None, :, None, None]
        z = kernels.spatial_conv_fwd(stage1, p["spatial_w"])
        z += p["spatial_b"][None, :, None]
    else:
        # spatial collapse of the raw channels, then a map-combining temporal conv
        stage1 = kernels.spatial_conv_fwd(x[:, None, :, :], p["spatial_w"][:, None, :])
        stage1 += p["spatial_b"][None, :, None]  # (N, F1, T)
        windows = np.lib.stride_tricks.sliding_window_view(
            stage1, cfg.temporal_kernel, axis=2
        )  # (N, F1, T1, K)
        z = np.einsum("nftk,ofk->not", windows, p["temporal_w"], optimize=True)
        z += p["temporal_b"][None, :, None]

    if train_mode:
        mu = z.mean(axis=(0, 2))
        var = z.var(axis=(0, 2))
        if update_running:
            model.buffers["bn_mean"][...] = (
                (1 - BN_MOMENTUM) * model.buffers["bn_mean"] + BN_MOMENTUM * mu
            ).astype(model.dtype)
            model.buffers["bn_var"][...] = (
                (1 - BN_MOMENTUM) * model.buffers["bn_var"] + BN_MOMENTUM * var
            ).astype(model.dtype)
    else:
        mu = model.buffers["bn_mean"]
        var = model.buffers["bn_var"]
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    zhat = (z - mu[None, :, None]) * inv_std[None, :, None]
    y = p["bn_gamma"][None, :, None] * zhat + p["bn_beta"][None, :, None]

    sig = 1.0 / (1.0 + np.exp(-y))
    s = y * sig  # SWISH

    pooled = kernels.avgpool_fwd(np.ascontiguousarray(s), cfg.pool_length, cfg.pool_stride)

    if train_mode and cfg.dropout_p > 0.0:
        if rng is None:
            raise ConfigError("train-mode forward with dropout needs an rng")
        keep = 1.0 - cfg.dropout_p
        mask = (rng.random(pooled.shape) < keep).astype(model.dtype) / model.dtype.type(keep)
        dropped = pooled * mask
    else:
        mask = None
        dropped = pooled

    flat = dropped.reshape(x.shape[0], cfg.n_features)
    logits = flat @ p["fc_w"].T + p["fc_b"][None, :]

    cache = {
        "x": x,
        "stage1": stage1,
        "zhat": zhat,
        "mu": mu,
        "inv_std": inv_std,
        "y": y,
        "sig": sig,
        "mask": mask,
        "flat": flat,
        "train_mode": train_mode,
    }
    return logits, cache


def backward(model: DecoderModel, cache: dict, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients w.r.t. every trainable parameter, matching PARAM_ORDER keys."""
    cfg = model.config
    p = model.params
    n = cache["x"].shape[0]

    grads: dict[str, np.ndarray] = {}
    dlogits = np.ascontiguousarray(dlogits, dtype=model.dtype)
    grads["fc_w"] = dlogits.T @ cache["flat"]
    grads["fc_b"] = dlogits.sum(axis=0)
    dflat = dlogits @ p["fc_w"]
    dpool = dflat.reshape(n, cfg.spatial_filters, cfg.pool_out)

    if cache["mask"] is not None:
        dpool = dpool * cache["mask"]

    ds = kernels.avgpool_bwd(
        cfg.conv_len, np.ascontiguousarray(dpool), cfg.pool_length, cfg.pool_stride
    )

    sig, y = cache["sig"], cache["y"]
    dy = ds * (sig + y * sig * (1.0 - sig))

    zhat, inv_std = cache["zhat"], cache["inv_std"]
    grads["bn_gamma"] = (dy * zhat).sum(axis=(0, 2))
    grads["bn_beta"] = dy.sum(axis=(0, 2))
    dzhat = dy * p["bn_gamma"][None, :, None]
    if cache["train_mode"]:
        m = dzhat.shape[0] * dzhat.shape[2]
        sum_dzhat = dzhat.sum(axis=(0, 2))
        sum_dzhat_zhat = (dzhat * zhat).sum(axis=(0, 2))
        dz = (inv_std[None, :, None] / m) * (
            m * dzhat
            - sum_dzhat[None, :, None]
            - zhat * sum_dzhat_zhat[None, :, None]
        )
    else:
        dz = dzhat * inv_std[None, :, None]

    if cfg.conv_order == "temporal_first":
        grads["spatial_b"] = dz.sum(axis=(0, 2))
        da, dws = kernels.spatial_conv_bwd(
            cache["stage1"], p["spatial_w"], np.ascontiguousarray(dz)
        )
        grads["spatial_w"] = dws
        grads["temporal_b"] = da.sum(axis=(0, 2, 3))
        grads["temporal_w"] = kernels.temporal_conv_bwd(
            cache["x"], p["temporal_w"], np.ascontiguousarray(da)
        )
    else:
        k = cfg.temporal_kernel
        t1 = cfg.conv_len
        stage1 = cache["stage1"]  # (N, F1, T)
        windows = np.lib.stride_tricks.sliding_window_view(stage1, k, axis=2)
        grads["temporal_b"] = dz.sum(axis=(0, 2))
        grads["temporal_w"] = np.einsum("not,nftk->ofk", dz, windows, optimize=True)
        dstage1 = np.zeros_like(stage1)
        for ki in range(k):
            dstage1[:, :, ki : ki + t1] += np.einsum(
                "not,of->nft", dz, p["temporal_w"][:, :, ki], optimize=True
            )
        grads["spatial_b"] = dstage1.sum(axis=(0, 2))
        _, dws = kernels.spatial_conv_bwd(
            np.ascontiguousarray(cache["x"][:, None, :, :]),
            np.ascontiguousarray(p["spatial_w"][:, None, :]),
            np.ascontiguousarray(dstage1),
        )
        grads["spatial_w"] = dws[:, 0, :]
    return grads


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    n = logits.shape[0]
    loss = -log_probs[np.arange(n), labels].mean()
    dlogits = np.exp(log_probs)
    dlogits[np.arange(n), labels] -= 1.0
    return float(loss), dlogits / n


def predict(model: DecoderModel, batch: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Eval-mode argmax class indices, computed in batches."""
    out = []
    for lo in range(0, batch.shape[0], batch_size):
        logits = forward(model, batch[lo : lo + batch_size], train_mode=False)
        out.append(np.argmax(logits, axis=1))
    return np.concatenate(out) if out else np.empty(0, dtype=np.int64)


def gradient_check(
    config: DecoderConfig | None = None,
    seed: int = 0,
    batch_size: int = 4,
    h: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Runs a tiny float64 model with dropout disabled, in both eval mode and
    train mode (batch statistics), and perturbs every parameter scalar.
    The error denominator is floored at 1e-6 (loss is O(1)): batch norm
    makes some bias gradients structurally zero in train mode, where both
    sides are pure rounding noise and a plain relative error is undefined.
    """
    if config is None:
        config = DecoderConfig(
            n_channels=2,
            n_samples=40,
            n_classes=3,
            temporal_filters=2,
            temporal_kernel=5,
            spatial_filters=3,
            pool_length=8,
            pool_stride=4,
            dropout_p=0.0,
        )
    if config.dropout_p != 0.0:
        raise ConfigError("gradient_check requires dropout_p == 0")
    model = build(config, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 1)
    x = rng.normal(size=(batch_size, config.n_channels, config.n_samples))
    labels = rng.integers(0, config.n_classes, size=batch_size)
    # Non-trivial buffers so the eval path is exercised away from identity.
    model.buffers["bn_mean"][...] = rng.normal(0.0, 0.1, size=config.spatial_filters)
    model.buffers["bn_var"][...] = 1.0 + rng.random(config.spatial_filters)

    worst = 0.0
    for train_mode in (False, True):

        def loss_at() -> float:
            logits, _ = forward_cache(model, x, train_mode, update_running=False)
            loss, _ = softmax_cross_entropy(logits, labels)
            return loss

        logits, cache = forward_cache(model, x, train_mode, update_running=False)
        _, dlogits = softmax_cross_entropy(logits, labels)
        grads = backward(model, cache, dlogits)

        for name in PARAM_ORDER:
            param = model.params[name]
            flat = param.reshape(-1)
            gflat = grads[name].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                lp = loss_at()
                flat[i] = orig - h
                lm = loss_at()
                flat[i] = orig
                fd = (lp - lm) / (2.0 * h)
                denom = max(abs(gflat[i]), abs(fd), 1e-6)
                worst = max(worst, abs(gflat[i] - fd) / denom)
    return worst


def save_checkpoint(model: DecoderModel, path: str | Path) -> None:
    """Single-file checkpoint: JSON header plus raw float32 arrays in order."""
    header = {
        "config": model.config.to_dict(),
        "arrays": [
            {"name": name, "shape": list(model.params[name].shape)} for name in PARAM_ORDER
        ]
        + [{"name": name, "shape": list(model.buffers[name].shape)} for name in BUFFER_ORDER],
    }
    blob = io.BytesIO()
    blob.write(CHECKPOINT_MAGIC)
    header_bytes = json.dumps(header).encode("utf-8")
    blob.write(len(header_bytes).to_bytes(8, "little"))
    blob.write(header_bytes)
    for name in PARAM_ORDER:
        blob.write(np.ascontiguousarray(model.params[name], dtype="<f4").tobytes())
    for name in BUFFER_ORDER:
        blob.write(np.ascontiguousarray(model.buffers[name], dtype="<f4").tobytes())
    Path(path).write_bytes(blob.getvalue())


def load_checkpoint(path: str | Path, dtype=np.float32) -> DecoderModel:
    raw = Path(path).read_bytes()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise ConfigError(f"{path} is not a decoder checkpoint")
    off = len(CHECKPOINT_MAGIC)
    hlen = int.from_bytes(raw[off : off + 8], "little")
    off += 8
    header = json.loads(raw[off : off + hlen].decode("utf-8"))
    off += hlen
    config = DecoderConfig.from_dict(header["config"])
    model = build(config, seed=0, dtype=dtype)
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=off).reshape(shape)
        off += 4 * count
        target = model.params if entry["name"] in model.params else model.buffers
        target[entry["name"]][...] = arr.astype(dtype)
    return model
