"""Benchmark the compiled vs pure-numpy convolution kernels.

Run: python3 benchmarks/bench_kernels.py [--repeats N]

Times forward and backward of conv2d/conv1d on shapes representative of
the network (T=301 frames, F=257 bands) and prints a table plus the
speedup of the compiled extension over the numpy fallback.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from phasen.ndtensor import backend


def timeit(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


CASES = [
    # (label, kind, args)
    ("conv2d 5x5 T301 F257 C8->C8", "2d", (301, 257, 8, 8, 5, 5)),
    ("conv2d 1x7 T301 F257 C2->C8", "2d", (301, 257, 2, 8, 1, 7)),
    ("conv2d 25x1 T301 F257 C6->C6", "2d", (301, 257, 6, 6, 25, 1)),
    ("conv1d k9 T301 D1285->F257", "1d", (301, 1285, 257, 9)),
]


def run_case(kind, args, name, repeats):
    rng = np.random.default_rng(0)
    be = backend.get_backend(name)
    if kind == "2d":
        T, F, cin, cout, kh, kw = args
        x = rng.standard_normal((T, F, cin)).astype(np.float32)
        w = rng.standard_normal((kh, kw, cin, cout)).astype(np.float32)
        b = np.zeros(cout, dtype=np.float32)
        y = be.conv2d_forward(x, w, b)
        g = np.ones_like(y)
        fwd = timeit(lambda: be.conv2d_forward(x, w, b), repeats)
        bwd = timeit(lambda: be.conv2d_backward(x, w, g), repeats)
    else:
        T, din, dout, k = args
        x = rng.standard_normal((T, din)).astype(np.float32)
        w = rng.standard_normal((k, din, dout)).astype(np.float32)
        b = np.zeros(dout, dtype=np.float32)
        y = be.conv1d_forward(x, w, b)
        g = np.ones_like(y)
        fwd = timeit(lambda: be.conv1d_forward(x, w, b), repeats)
        bwd = timeit(lambda: be.conv1d_backward(x, w, g), repeats)
    return fwd, bwd


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    names = backend.available_backends()
    print(f"backends: {', '.join(names)}")
    header = f"{'case':36s}" + "".join(
        f"{n + ' fwd':>14s}{n + ' bwd':>14s}" for n in names)
    print(header)
    print("-" * len(header))
    totals = {n: 0.0 for n in names}
    for label, kind, shape in CASES:
        row = f"{label:36s}"
        for n in names:
            fwd, bwd = run_case(kind, shape, n, args.repeats)
            totals[n] += fwd + bwd
            row += f"{fwd * 1e3:12.2f}ms{bwd * 1e3:12.2f}ms"
        print(row)
    if "compiled" in totals and "numpy" in totals:
        ratio = totals["numpy"] / totals["compiled"]
        print(f"\ntotal numpy {totals['numpy']:.3f}s / "
              f"compiled {totals['compiled']:.3f}s "
              f"-> compiled is {ratio:.2f}x the numpy fallback")


if __name__ == "__main__":
    main()
