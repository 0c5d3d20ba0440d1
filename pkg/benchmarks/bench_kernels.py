"""Time the compiled and numpy Picard-Opial kernels on the same inputs.

Usage: python benchmarks/bench_kernels.py [--sizes 100 400 1600] [--repeats 5]

Each case is one full inner fixed-point solve from v = 0 for an
overlapping-group or fused-difference operator.  Prints a table with the
median time per solve and the speedup of the compiled kernel.
"""
import argparse
import statistics
import time
import warnings

import numpy as np

from compprox import kernels
from compprox.builders import fused_difference_operator, group_selection_operator
from compprox.experiments import gen_overlap_groups
from compprox.fixed_point import _kernel_args, default_lam, gram_spectrum


def cases(d):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        B, off = group_selection_operator(gen_overlap_groups(d))
    yield "group_l2", B, 1, off
    B = fused_difference_operator(d)
    yield "fused_l1", B, 0, np.array([0, B.rows], dtype=np.int64)


def time_kernel(fn, args, z, m, repeats):
    times, iters = [], 0
    for _ in range(repeats):
        v = np.zeros(m)
        t0 = time.perf_counter()
        iters, _, _ = fn(*args[:6], z, v, *args[6:])
        times.append(time.perf_counter() - t0)
    return statistics.median(times) * 1e3, iters


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[100, 400, 1600])
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    if "cython" not in kernels.BACKENDS:
        print("compiled kernel not available; only the numpy fallback can be timed")
    rng = np.random.default_rng(args.seed)
    print(f"{'case':<10} {'d':>6} {'iters':>6} {'python ms':>10} {'cython ms':>10} {'speedup':>8}")
    for d in args.sizes:
        for name, B, kind, off in cases(d):
            lam = default_lam(gram_spectrum(B))
            indptr, indices, data, tindptr, tindices, tdata = _kernel_args(B)
            z = rng.standard_normal(d)
            thresh = 0.5 / lam
            rest = (lam, thresh, kind, np.asarray(off, dtype=np.int64), 0.2, 1e-10, 5000)
            kargs = (indptr, indices, data, tindptr, tindices, tdata) + rest
            row = {}
            for backend, fn in sorted(kernels.BACKENDS.items()):
                row[backend] = time_kernel(fn, kargs, z, B.rows, args.repeats)
            py_ms, iters = row["python"]
            cy_ms = row.get("cython", (float("nan"), 0))[0]
            print(f"{name:<10} {d:>6} {iters:>6} {py_ms:>10.3f} {cy_ms:>10.3f} {py_ms / cy_ms:>8.1f}")


if __name__ == "__main__":
    main()
