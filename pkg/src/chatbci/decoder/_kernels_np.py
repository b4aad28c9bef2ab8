"""Pure-NumPy reference implementations of the decoder's hot kernels.

Shapes:
  x   (N, C, T)        input trials
  wt  (F1, K)          temporal filters, shared across channels
  a   (N, F1, C, T1)   temporal-conv output, T1 = T - K + 1
  ws  (F2, F1, C)      spatial filters collapsing the channel axis
  z   (N, F2, T1)      spatial-conv output
  p   (N, F2, P)       pooled output, P = (T1 - L) // S + 1
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def temporal_conv_fwd(x: np.ndarray, wt: np.ndarray) -> np.ndarray:
    windows = sliding_window_view(x, wt.shape[1], axis=2)  # (N, C, T1, K)
    a = np.tensordot(windows, wt, axes=([3], [1]))  # (N, C, T1, F1)
    return np.ascontiguousarray(a.transpose(0, 3, 1, 2))


def temporal_conv_bwd(x: np.ndarray, wt: np.ndarray, da: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the temporal weights (input gradient is not needed)."""
    windows = sliding_window_view(x, wt.shape[1], axis=2)  # (N, C, T1, K)
    # dwt[f, k] = sum_{n,c,t} da[n,f,c,t] * x[n,c,t+k]
    return np.einsum("nfct,nctk->fk", da, windows, optimize=True)


def spatial_conv_fwd(a: np.ndarray, ws: np.ndarray) -> np.ndarray:
    n, f1, c, t1 = a.shape
    f2 = ws.shape[0]
    a2 = a.reshape(n, f1 * c, t1)
    w2 = ws.reshape(f2, f1 * c)
    return np.einsum("nit,oi->not", a2, w2, optimize=True)


def spatial_conv_bwd(
    a: np.ndarray, ws: np.ndarray, dz: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    n, f1, c, t1 = a.shape
    f2 = ws.shape[0]
    a2 = a.reshape(n, f1 * c, t1)
    dws = np.einsum("not,nit->oi", dz, a2, optimize=True).reshape(f2, f1, c)
    da = np.einsum("not,oi->nit", dz, ws.reshape(f2, f1 * c), optimize=True)
    return da.reshape(n, f1, c, t1), dws


def avgpool_fwd(z: np.ndarray, length: int, stride: int) -> np.ndarray:
    windows = sliding_window_view(z, length, axis=2)[:, :, ::stride]  # (N, F2, P, L)
    return windows.mean(axis=3)


def avgpool_bwd(t1: int, dp: np.ndarray, length: int, stride: int) -> np.ndarray:
    n, f2, p = dp.shape
    dz = np.zeros((n, f2, t1), dtype=dp.dtype)
    inv = dp / length
    for j in range(p):
        dz[:, :, j * stride : j * stride + length] += inv[:, :, j : j + 1]
    return dz
