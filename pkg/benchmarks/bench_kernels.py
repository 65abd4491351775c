"""Compiled vs pure-Python kernels: assignment solver and cyclic offset scan.

    python benchmarks/bench_kernels.py [--repeats 3] [--max-exact 512] [--max-scan 4096]

Prints one row per (kernel, n) with the best-of-repeats time of each
backend and the speedup, and checks that both backends agree.
"""
import argparse
import time

import numpy as np

from orbitdist._backend import available_backends


def best_time(fn, *args, repeats=3):
    best, out = float("inf"), None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--max-exact", type=int, default=512)
    ap.add_argument("--max-scan", type=int, default=4096)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    backends = available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; timing the python backend only")
    rng = np.random.default_rng(args.seed)
    names = sorted(backends)
    print(f"{'kernel':<12}{'n':>7}" + "".join(f"{b + ' s':>14}" for b in names) + f"{'speedup':>10}")

    n = 64
    while n <= args.max_exact:
        x, y = rng.random(n), rng.random(n)
        d = np.abs(x[:, None] - y[None, :])
        C = np.ascontiguousarray(np.minimum(d, 1.0 - d))
        times, totals = {}, {}
        for b in names:
            times[b], (perm, _, _) = best_time(backends[b].lsap, C, repeats=args.repeats)
            totals[b] = C[np.arange(n), perm].sum()
        assert np.allclose(list(totals.values()), totals[names[0]], rtol=1e-12)
        _row("lsap", n, names, times)
        n *= 2

    n = 64
    while n <= args.max_scan:
        xs, ys = np.sort(rng.random(n)), np.sort(rng.random(n))
        times, vals = {}, {}
        for b in names:
            times[b], (_, vals[b], _) = best_time(backends[b].cyclic_scan, xs, ys, repeats=args.repeats)
        assert np.allclose(list(vals.values()), vals[names[0]], rtol=1e-12)
        _row("cyclic_scan", n, names, times)
        n *= 2


def _row(kernel, n, names, times):
    speed = times["python"] / times["compiled"] if "compiled" in times else 1.0
    print(f"{kernel:<12}{n:>7}" + "".join(f"{times[b]:>14.6f}" for b in names) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
