# Compiled twins of the NumPy kernels in _kernels_np.py.
# Same contracts and shapes; loops are written out so the C compiler can
# vectorize the innermost time axis.

import numpy as np

cimport cython

ctypedef fused floating:
    float
    double


def temporal_conv_fwd(floating[:, :, ::1] x, floating[:, ::1] wt):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], t = x.shape[2]
    cdef Py_ssize_t f1 = wt.shape[0], k = wt.shape[1]
    cdef Py_ssize_t t1 = t - k + 1
    if floating is float:
        out_np = np.empty((n, f1, c, t1), dtype=np.float32)
    else:
        out_np = np.empty((n, f1, c, t1), dtype=np.float64)
    cdef floating[:, :, :, ::1] out = out_np
    cdef Py_ssize_t ni, fi, ci, ti, ki
    cdef floating acc, w
    for ni in range(n):
        for fi in range(f1):
            for ci in range(c):
                for ti in range(t1):
                    out[ni, fi, ci, ti] = 0
                for ki in range(k):
                    w = wt[fi, ki]
                    for ti in range(t1):
                        out[ni, fi, ci, ti] += w * x[ni, ci, ti + ki]
    return out_np


def temporal_conv_bwd(floating[:, :, ::1] x, floating[:, ::1] wt,
                      floating[:, :, :, ::1] da):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t f1 = wt.shape[0], k = wt.shape[1]
    cdef Py_ssize_t t1 = da.shape[3]
    if floating is float:
        dwt_np = np.zeros((f1, k), dtype=np.float32)
    else:
        dwt_np = np.zeros((f1, k), dtype=np.float64)
    cdef floating[:, ::1] dwt = dwt_np
    cdef Py_ssize_t ni, fi, ci, ti, ki
    cdef floating g
    # single pass over da; the k-element dwt row stays cache-resident
    for ni in range(n):
        for fi in range(f1):
            for ci in range(c):
                for ti in range(t1):
                    g = da[ni, fi, ci, ti]
                    for ki in range(k):
                        dwt[fi, ki] += g * x[ni, ci, ti + ki]
    return dwt_np


def spatial_conv_fwd(floating[:, :, :, ::1] a, floating[:, :, ::1] ws):
    cdef Py_ssize_t n = a.shape[0], f1 = a.shape[1], c = a.shape[2], t1 = a.shape[3]
    cdef Py_ssize_t f2 = ws.shape[0]
    if floating is float:
        out_np = np.empty((n, f2, t1), dtype=np.float32)
    else:
        out_np = np.empty((n, f2, t1), dtype=np.float64)
    cdef floating[:, :, ::1] out = out_np
    cdef Py_ssize_t ni, oi, fi, ci, ti
    cdef floating w
    for ni in range(n):
        for oi in range(f2):
            for ti in range(t1):
                out[ni, oi, ti] = 0
            for fi in range(f1):
                for ci in range(c):
                    w = ws[oi, fi, ci]
                    for ti in range(t1):
                        out[ni, oi, ti] += w * a[ni, fi, ci, ti]
    return out_np


def spatial_conv_bwd(floating[:, :, :, ::1] a, floating[:, :, ::1] ws,
                     floating[:, :, ::1] dz):
    cdef Py_ssize_t n = a.shape[0], f1 = a.shape[1], c = a.shape[2], t1 = a.shape[3]
    cdef Py_ssize_t f2 = ws.shape[0]
    if floating is float:
        da_np = np.zeros((n, f1, c, t1), dtype=np.float32)
        dws_np = np.zeros((f2, f1, c), dtype=np.float32)
    else:
        da_np = np.zeros((n, f1, c, t1), dtype=np.float64)
        dws_np = np.zeros((f2, f1, c), dtype=np.float64)
    cdef floating[:, :, :, ::1] da = da_np
    cdef floating[:, :, ::1] dws = dws_np
    cdef Py_ssize_t ni, oi, fi, ci, ti
    cdef floating w, acc
    # (fi, ci) outer keeps the da row hot across the f2 accumulation passes
    for ni in range(n):
        for fi in range(f1):
            for ci in range(c):
                for oi in range(f2):
                    w = ws[oi, fi, ci]
                    acc = 0
                    for ti in range(t1):
                        acc += dz[ni, oi, ti] * a[ni, fi, ci, ti]
                        da[ni, fi, ci, ti] += w * dz[ni, oi, ti]
                    dws[oi, fi, ci] += acc
    return da_np, dws_np


def avgpool_fwd(floating[:, :, ::1] z, Py_ssize_t length, Py_ssize_t stride):
    cdef Py_ssize_t n = z.shape[0], f2 = z.shape[1], t1 = z.shape[2]
    cdef Py_ssize_t p = (t1 - length) // stride + 1
    if floating is float:
        out_np = np.empty((n, f2, p), dtype=np.float32)
    else:
        out_np = np.empty((n, f2, p), dtype=np.float64)
    cdef floating[:, :, ::1] out = out_np
    cdef Py_ssize_t ni, oi, ji, ti
    cdef floating acc, inv = <floating>1.0 / <floating>length
    for ni in range(n):
        for oi in range(f2):
            for ji in range(p):
                acc = 0
                for ti in range(ji * stride, ji * stride + length):
                    acc += z[ni, oi, ti]
                out[ni, oi, ji] = acc * inv
    return out_np


def avgpool_bwd(Py_ssize_t t1, floating[:, :, ::1] dp, Py_ssize_t length,
                Py_ssize_t stride):
    cdef Py_ssize_t n = dp.shape[0], f2 = dp.shape[1], p = dp.shape[2]
    if floating is float:
        dz_np = np.zeros((n, f2, t1), dtype=np.float32)
    else:
        dz_np = np.zeros((n, f2, t1), dtype=np.float64)
    cdef floating[:, :, ::1] dz = dz_np
    cdef Py_ssize_t ni, oi, ji, ti
    cdef floating g, inv = <floating>1.0 / <floating>length
    for ni in range(n):
        for oi in range(f2):
            for ji in range(p):
                g = dp[ni, oi, ji] * inv
                for ti in range(ji * stride, ji * stride + length):
                    dz[ni, oi, ti] += g
    return dz_np
