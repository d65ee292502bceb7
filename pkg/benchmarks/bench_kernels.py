"""Time the compiled and numpy convolution kernels on VGG-micro-sized layers.

    python benchmarks/bench_kernels.py [--repeats 20] [--dtype float32]
"""
import argparse
import statistics
import time

import numpy as np
from threadpoolctl import threadpool_limits

from pwtprune import kernels

# (batch, in, out, side, k, stride, pruned fraction of filters)
CASES = (
    (32, 1, 8, 16, 3, 1, 0.0),
    (32, 8, 16, 14, 3, 1, 0.0),
    (32, 16, 32, 4, 3, 1, 0.0),
    (32, 8, 16, 14, 3, 1, 0.5),
    (64, 16, 32, 13, 3, 2, 0.0),
)


def _time(fn, repeats):
    fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def bench(backend, case, dtype, repeats):
    B, I, O, N, k, S, frac = case
    rng = np.random.default_rng(0)
    x = rng.normal(size=(B, I, N, N)).astype(dtype)
    w = rng.normal(size=(O, I, k, k)).astype(dtype)
    b = rng.normal(size=O).astype(dtype)
    out_idx = np.arange(int(round(O * frac)), O, dtype=np.intp)
    in_idx = np.arange(I, dtype=np.intp)
    y = backend.conv_forward(x, w, b, S, out_idx, in_idx)
    g = rng.normal(size=y.shape).astype(dtype)
    return (
        _time(lambda: backend.conv_forward(x, w, b, S, out_idx, in_idx), repeats),
        _time(lambda: backend.conv_backward_weight(x, g, S, k, out_idx, in_idx), repeats),
        _time(lambda: backend.conv_backward_input(g, w, S, N, out_idx, in_idx), repeats),
    )


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    args = ap.parse_args()
    names = kernels.available_backends()
    print(f"backends: {', '.join(names)} (default {kernels.BACKEND}), dtype {args.dtype}, 1 thread")
    print(f"{'case (B,I,O,N,k,S,pruned)':<34}{'backend':<11}{'forward ms':>11}{'dw ms':>9}{'dx ms':>9}")
    with threadpool_limits(limits=1):
        for case in CASES:
            base = None
            for name in names:
                t = bench(kernels.load_backend(name), case, np.dtype(args.dtype), args.repeats)
                speed = "" if base is None else f"  {names[0]} {sum(t) / sum(base):.1f}x faster"
                base = base or t
                print(f"{str(case):<34}{name:<11}{t[0] * 1e3:>11.3f}{t[1] * 1e3:>9.3f}{t[2] * 1e3:>9.3f}{speed}")


if __name__ == "__main__":
    main()
