"""Time the kernel block assembly with and without numba.

Usage::

    python benchmarks/bench_kernel.py [--n-left 4000] [--n-right 400] [--repeat 3]

Both backends are called in the same process through ``use_numba``; the
distance deduplication is switched off so the per-entry kernels are what
gets timed. Points are Halton, so there is little to deduplicate anyway.
"""

import argparse
import time

import numpy as np

from hamwave import kernel
from hamwave._accel import HAVE_NUMBA
from hamwave.geometry import Domain, halton_points
from hamwave.kernel import KernelSpec, kernel_blocks


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-left", type=int, default=4000)
    ap.add_argument("--n-right", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    dom = Domain.rectangle((0, 1), (0, 1))
    left = halton_points(dom, args.n_left).points
    right = halton_points(dom, args.n_right).points
    kernel._DEDUP_MIN_SIZE = np.inf

    print(f"blocks {args.n_left} x {args.n_right}, value + gradient + Laplacian")
    for m in (3, 4):
        spec = KernelSpec(m, 2.0, 2)
        t_np, ref = best_of(lambda: kernel_blocks(spec, left, right, True, True, use_numba=False), args.repeat)
        line = f"m={m} (2nu={spec.two_nu}): numpy {t_np:.3f} s"
        if HAVE_NUMBA:
            kernel_blocks(spec, left[:2], right[:2], True, True, use_numba=True)  # compile
            t_nb, out = best_of(lambda: kernel_blocks(spec, left, right, True, True, use_numba=True), args.repeat)
            diff = max(float(np.max(np.abs(a - b))) for a, b in zip(out[::2], ref[::2]))
            line += f", numba {t_nb:.3f} s, speedup {t_np / t_nb:.1f}x, max difference {diff:.1e}"
        else:
            line += ", numba unavailable or disabled"
        print(line)


if __name__ == "__main__":
    main()
