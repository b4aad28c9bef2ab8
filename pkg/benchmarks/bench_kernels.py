"""Benchmark the compiled kernel extension against the NumPy fallback.

Times every hot kernel (temporal/spatial conv and average pooling, forward
and backward) plus a full train-mode forward/backward step, across batch
shapes that bracket the decoder's real workloads.

Usage: python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from chatbci.decoder import kernels
from chatbci.decoder.model import DecoderConfig, backward, build, forward_cache, softmax_cross_entropy

SHAPES = [
    # (batch, channels, samples) -- small synthetic, mid, and full-montage
    (16, 4, 500),
    (64, 4, 500),
    (64, 22, 1000),
]


def time_call(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(backend, n, c, t, repeats, dtype=np.float32):
    rng = np.random.default_rng(0)
    f1, k, f2, pool_l, pool_s = 8, 25, 16, 150, 15
    x = np.ascontiguousarray(rng.normal(size=(n, c, t)), dtype=dtype)
    wt = np.ascontiguousarray(rng.normal(size=(f1, k)), dtype=dtype)
    ws = np.ascontiguousarray(rng.normal(size=(f2, f1, c)), dtype=dtype)

    a = np.ascontiguousarray(backend.temporal_conv_fwd(x, wt))
    z = np.ascontiguousarray(backend.spatial_conv_fwd(a, ws))
    p = backend.avgpool_fwd(z, pool_l, pool_s)
    dp = np.ascontiguousarray(rng.normal(size=p.shape), dtype=dtype)
    dz = np.ascontiguousarray(backend.avgpool_bwd(z.shape[2], dp, pool_l, pool_s))
    da = np.ascontiguousarray(backend.spatial_conv_bwd(a, ws, dz)[0])

    return {
        "temporal_fwd": time_call(lambda: backend.temporal_conv_fwd(x, wt), repeats),
        "temporal_bwd": time_call(lambda: backend.temporal_conv_bwd(x, wt, da), repeats),
        "spatial_fwd": time_call(lambda: backend.spatial_conv_fwd(a, ws), repeats),
        "spatial_bwd": time_call(lambda: backend.spatial_conv_bwd(a, ws, dz), repeats),
        "pool_fwd": time_call(lambda: backend.avgpool_fwd(z, pool_l, pool_s), repeats),
        "pool_bwd": time_call(lambda: backend.avgpool_bwd(z.shape[2], dp, pool_l, pool_s), repeats),
    }


def bench_full_step(n, c, t, repeats):
    """One train-mode forward + backward through the whole model."""
    rng = np.random.default_rng(0)
    cfg = DecoderConfig(n_channels=c, n_samples=t, dropout_p=0.0)
    model = build(cfg, seed=0)
    x = rng.normal(size=(n, c, t)).astype(np.float32)
    labels = rng.integers(0, 4, size=n)

    def step():
        logits, cache = forward_cache(model, x, train_mode=True, update_running=False)
        _, dlogits = softmax_cross_entropy(logits, labels)
        backward(model, cache, dlogits)

    return time_call(step, repeats)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = {"numpy": kernels.get_backend("numpy")}
    try:
        backends["cython"] = kernels.get_backend("cython")
    except ImportError:
        print("compiled extension not built; benchmarking the NumPy fallback only")

    print(f"active backend at import: {kernels.BACKEND}\n")
    for n, c, t in SHAPES:
        print(f"== batch={n} channels={c} samples={t} (float32) ==")
        rows = {name: bench_kernels(be, n, c, t, args.repeats) for name, be in backends.items()}
        ops = list(next(iter(rows.values())))
        header = f"{'kernel':14s}" + "".join(f"{name:>12s}" for name in rows)
        if len(rows) == 2:
            header += f"{'speedup':>10s}"
        print(header)
        for op in ops:
            line = f"{op:14s}" + "".join(f"{rows[name][op] * 1e3:11.2f}m" for name in rows)
            if len(rows) == 2:
                line += f"{rows['numpy'][op] / rows['cython'][op]:9.2f}x"
            print(line)
        print()

    print("== full train step (model fwd+bwd, active backend) ==")
    for n, c, t in SHAPES:
        dt = bench_full_step(n, c, t, args.repeats)
        print(f"batch={n:3d} channels={c:2d} samples={t:4d}: {dt * 1e3:8.1f} ms")


if __name__ == "__main__":
    main()
