"""Benchmark the two kernel backends against each other.

Runs each hot kernel (bilinear warp, nearest-neighbour mask warp,
Gauss-Newton term accumulation, masked SSE) under the vectorized numpy
implementation and, when numba is installed, the jit-compiled loop
implementation, printing the best wall time of each and the speedup.
Outputs are cross-checked for agreement before timing.

Usage: python3 benchmarks/bench_kernels.py [--height H] [--width W]
       [--repeats N]
"""

import argparse
import time

import numpy as np

from roadalign import _kernels as K


def _textured(seed, shape):
    rng = np.random.default_rng(seed)
    img = rng.uniform(0.0, 1.0, shape)
    # a little smoothing gives the gradients realistic structure
    for axis in (0, 1):
        img = (np.roll(img, 1, axis) + img + np.roll(img, -1, axis)) / 3.0
    return img


def _best_time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--height", type=int, default=480)
    parser.add_argument("--width", type=int, default=640)
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    h, w = args.height, args.width
    img = _textured(1, (h, w))
    obs = _textured(2, (h, w))
    mask = _textured(3, (h, w)) > 0.5
    wx, wy, wz = 0.004, -0.006, 0.003
    f, cx, cy = 1.2 * w, (w - 1) / 2.0, (h - 1) / 2.0
    skip = 2

    calls = {
        "warp_bilinear": lambda impl: impl["warp_bilinear"](
            img, wx, wy, wz, f, cx, cy),
        "warp_nearest": lambda impl: impl["warp_nearest"](
            mask, wx, wy, wz, f, cx, cy),
        "lk_terms": lambda impl: impl["lk_terms"](
            *impl["warp_bilinear"](img, wx, wy, wz, f, cx, cy),
            obs, f, cx, cy, skip),
        "masked_sse": lambda impl: impl["masked_sse"](
            *impl["warp_bilinear"](img, wx, wy, wz, f, cx, cy)[:1],
            np.ones((h, w), dtype=bool), obs, skip),
    }

    print(f"image {h}x{w}, best of {args.repeats} runs")
    if K.NUMBA_IMPL is None:
        print("numba not installed; timing the numpy backend only")

    header = f"{'kernel':<14}{'numpy':>12}{'numba':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, call in calls.items():
        if K.NUMBA_IMPL is not None:
            a = call(K.NUMPY_IMPL)
            b = call(K.NUMBA_IMPL)
            pairs = zip(a, b) if isinstance(a, tuple) else [(a, b)]
            agree = all(np.allclose(x, y, rtol=1e-9, atol=1e-12)
                        for x, y in pairs)
            if not agree:
                raise SystemExit(f"{name}: backends disagree")
            call(K.NUMBA_IMPL)  # ensure compilation happened before timing
        t_np = _best_time(lambda: call(K.NUMPY_IMPL), args.repeats)
        if K.NUMBA_IMPL is not None:
            t_nb = _best_time(lambda: call(K.NUMBA_IMPL), args.repeats)
            print(f"{name:<14}{t_np * 1e3:>10.2f}ms{t_nb * 1e3:>10.2f}ms"
                  f"{t_np / t_nb:>9.1f}x")
        else:
            print(f"{name:<14}{t_np * 1e3:>10.2f}ms{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
