"""Kernel backend selection: compiled extension when available, NumPy otherwise.

Set CHATBCI_KERNELS to "cython" or "numpy" to force a backend ("auto" by
default). Both backends implement identical contracts; parity is covered by
tests and timed by benchmarks/bench_kernels.py.
"""

from __future__ import annotations

import os

from . import _kernels_np

_FORCE = os.environ.get("CHATBCI_KERNELS", "auto").lower()

_cy = None
if _FORCE in ("auto", "cython"):
    try:
        from . import _kernels_cy as _cy  # type: ignore[no-redef]
    except ImportError:
        _cy = None
        if _FORCE == "cython":
            raise ImportError(
                "CHATBCI_KERNELS=cython but the compiled extension is not built; "
                "run `pip install -e . --no-build-isolation`"
            )

_impl = _cy if _cy is not None else _kernels_np

BACKEND = "cython" if _cy is not None else "numpy"

temporal_conv_fwd = _impl.temporal_conv_fwd
temporal_conv_bwd = _impl.temporal_conv_bwd
spatial_conv_fwd = _impl.spatial_conv_fwd
spatial_conv_bwd = _impl.spatial_conv_bwd
avgpool_fwd = _impl.avgpool_fwd
avgpool_bwd = _impl.avgpool_bwd


def get_backend(name: str):
    """Explicit backend module by name, for tests and benchmarks."""
    if name == "numpy":
        return _kernels_np
    if name == "cython":
        if _cy is None:
            raise ImportError("compiled kernel extension not available")
        return _cy
    raise ValueError(f"unknown kernel backend {name!r}")
