"""Compare the compiled sampling kernels against the pure numpy fallback.

Both backends implement the same contract, bit for bit; this script times
them on workloads shaped like the ones the pixel-bound builder produces
(dense point sampling plus interval hulls over mixed-size coordinate
rectangles) and checks that the outputs agree exactly.

    python3 benchmarks/bench_kernels.py [--size 25] [--repeats 7]
"""

import argparse
import time

import numpy as np

from geocert._kernels import BACKEND, pyref

try:
    from geocert._kernels import warpcore
except ImportError:
    warpcore = None


def make_workload(size, rng):
    """Texture plus coordinate rectangles spanning the branch mix seen in use."""
    tex = rng.uniform(0.0, 1.0, (size, size, 4))
    tex[rng.random((size, size)) < 0.6] = 0.0

    n = size * size
    rows = rng.uniform(-2.0, size + 1.0, n)
    cols = rng.uniform(-2.0, size + 1.0, n)
    # one third degenerate, one third sub-cell, one third multi-cell spans
    span = rng.uniform(0.0, 3.0, n)
    span[: n // 3] = 0.0
    span[n // 3 : 2 * n // 3] *= 0.2
    return tex, rows, rows + span, cols, cols + span


def bench(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=25, help="square texture size")
    ap.add_argument("--repeats", type=int, default=7, help="timing repeats, best kept")
    args = ap.parse_args()

    if warpcore is None:
        raise SystemExit("compiled backend unavailable; build with: python3 setup.py build_ext --inplace")
    print(f"package selected backend: {BACKEND}")

    rng = np.random.default_rng(0)
    tex, rlo, rhi, clo, chi = make_workload(args.size, rng)

    lo_c, hi_c = warpcore.bilinear_hull(tex, rlo, rhi, clo, chi)
    lo_p, hi_p = pyref.bilinear_hull(tex, rlo, rhi, clo, chi)
    if not (np.array_equal(lo_c, lo_p) and np.array_equal(hi_c, hi_p)):
        raise SystemExit("backend outputs disagree; bit parity is broken")
    pt_c = warpcore.sample_bilinear(tex, rlo, clo)
    pt_p = pyref.sample_bilinear(tex, rlo, clo)
    if not np.array_equal(pt_c, pt_p):
        raise SystemExit("backend outputs disagree; bit parity is broken")

    print(f"texture {args.size}x{args.size}x4, {rlo.size} samples, best of {args.repeats}")
    rows = [
        ("sample_bilinear", (tex, rlo, clo)),
        ("bilinear_hull", (tex, rlo, rhi, clo, chi)),
    ]
    print(f"{'kernel':<16} {'compiled':>12} {'numpy':>12} {'speedup':>9}")
    for name, call in rows:
        tc = bench(getattr(warpcore, name), call, args.repeats)
        tp = bench(getattr(pyref, name), call, args.repeats)
        print(f"{name:<16} {tc * 1e3:>10.2f}ms {tp * 1e3:>10.2f}ms {tp / tc:>8.1f}x")


if __name__ == "__main__":
    main()
