from .kernels import BACKEND as KERNEL_BACKEND
from .model import (
    DecoderConfig,
    DecoderModel,
    backward,
    build,
    forward,
    forward_cache,
    gradient_check,
    load_checkpoint,
    predict,
    save_checkpoint,
    softmax_cross_entropy,
    swish,
)

__all__ = [
    "KERNEL_BACKEND",
    "DecoderConfig",
    "DecoderModel",
    "backward",
    "build",
    "forward",
    "forward_cache",
    "gradient_check",
    "load_checkpoint",
    "predict",
    "save_checkpoint",
    "softmax_cross_entropy",
    "swish",
]
