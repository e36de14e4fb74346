"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Prints one CSV row per (kernel, size, backend) with the best wall time in
seconds and the speed-up of the compiled module.
"""
import argparse
import csv
import sys
import time

import numpy as np

from egocircles import _backend, _kernels_py
from egocircles.cli import sweep_timing


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def _random_flow(n, degree, rng):
    m = n * degree
    tails = rng.integers(0, n, m).astype(np.int64)
    heads = rng.integers(0, n, m).astype(np.int64)
    keep = tails != heads
    return tails[keep], heads[keep], rng.random(keep.sum()) * 10


def bench_max_flow(mod, n, rng, repeat):
    tails, heads, caps = _random_flow(n, 6, rng)
    return _best(lambda: mod.max_flow(n, tails, heads, caps, 0, n - 1), repeat)


def bench_icm(mod, n, rng, repeat):
    unary = rng.normal(size=(n, 2))
    i = rng.integers(0, n, 4 * n)
    j = rng.integers(0, n, 4 * n)
    keep = i != j
    i, j = i[keep], j[keep]
    w = rng.normal(size=i.size)
    src = np.concatenate([i, j])
    dst = np.concatenate([j, i])
    ww = np.concatenate([w, w])
    order_ = np.argsort(src, kind="stable")
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr, src + 1, 1)
    ptr = np.cumsum(ptr)
    idx, wts = dst[order_].astype(np.int64), ww[order_]
    order = rng.permutation(n).astype(np.int64)

    def run():
        labels = np.zeros(n, dtype=np.int64)
        mod.icm(labels, unary, ptr, idx, wts, order)

    return _best(run, repeat)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--sizes", default="200,1000")
    args = ap.parse_args(argv)
    if _backend.NAME != "compiled":
        sys.exit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
    sizes = [int(s) for s in args.sizes.split(",")]
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["kernel", "n", "compiled_s", "python_s", "speedup"])
    benches = {
        "max_flow": bench_max_flow,
        "icm": bench_icm,
        "mcmc_sweep": lambda mod, n, rng, repeat: min(sweep_timing(n, 4, 1, 0, mod) for _ in range(repeat)),
    }
    for name, bench in benches.items():
        for n in sizes:
            fast = bench(_backend.kernels, n, np.random.default_rng(n), args.repeat)
            slow = bench(_kernels_py, n, np.random.default_rng(n), args.repeat)
            out.writerow([name, n, f"{fast:.6f}", f"{slow:.6f}", f"{slow / fast:.1f}"])


if __name__ == "__main__":
    main()
