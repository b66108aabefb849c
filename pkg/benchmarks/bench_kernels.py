"""Timing comparison of the compiled and pure-numpy kernel backends.

Run:  python benchmarks/bench_kernels.py [--repeat N]

Shapes mirror the reference model on 1x32x32 inputs plus one heavier case.
Both backends compute identical values (they share the float64 accumulation
contract), so this is purely a speed report.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from biofed.nn import kernels


def time_call(fn, *args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


CASES = [
    ("conv 16x1x32x32 -> 8ch 3x3", "conv", (16, 1, 32, 32), (8, 1, 3, 3), 1, 1),
    ("conv 16x8x16x16 -> 16ch 3x3", "conv", (16, 8, 16, 16), (16, 8, 3, 3), 1, 1),
    ("conv 32x16x32x32 -> 32ch 3x3", "conv", (32, 16, 32, 32), (32, 16, 3, 3), 1, 1),
    ("pool 16x8x32x32 w2s2", "pool", (16, 8, 32, 32), None, 2, 2),
    ("pool 32x16x64x64 w2s2", "pool", (32, 16, 64, 64), None, 2, 2),
]


def run(repeat):
    rng = np.random.default_rng(0)
    names = kernels.available_backends()
    print(f"backends: {', '.join(names)}")
    header = f"{'case':36s}" + "".join(f"{n:>12s}" for n in names) + f"{'speedup':>10s}"
    print(header)
    print("-" * len(header))
    for label, kind, xshape, wshape, stride, extra in CASES:
        x = rng.standard_normal(xshape).astype(np.float32)
        timings = []
        for name in names:
            backend = kernels.get_backend(name)
            if kind == "conv":
                w = rng.standard_normal(wshape).astype(np.float32)
                b = rng.standard_normal(wshape[0]).astype(np.float32)
                y = backend.conv2d_forward(x, w, b, stride, extra)
                dy = rng.standard_normal(y.shape).astype(np.float32)
                fwd = time_call(backend.conv2d_forward, x, w, b, stride, extra, repeat=repeat)
                bwd = time_call(backend.conv2d_backward, x, w, dy, stride, extra, repeat=repeat)
            else:
                y, idx = backend.maxpool2d_forward(x, extra, stride)
                dy = rng.standard_normal(y.shape).astype(np.float32)
                fwd = time_call(backend.maxpool2d_forward, x, extra, stride, repeat=repeat)
                bwd = time_call(backend.maxpool2d_backward, idx, dy, x.shape, repeat=repeat)
            timings.append(fwd + bwd)
        ratio = timings[-1] / timings[0] if len(timings) > 1 and timings[0] > 0 else 1.0
        row = f"{label:36s}" + "".join(f"{t * 1e3:9.2f} ms" for t in timings)
        print(row + f"{ratio:9.2f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5, help="best-of-N timing")
    args = parser.parse_args()
    run(args.repeat)


if __name__ == "__main__":
    main()
