"""Solver timing harness shared by ``orbitdist bench`` and benchmarks/."""
from __future__ import annotations

import math
import time

import numpy as np

from ._backend import BACKEND, available_backends
from .matching import CostMatrix, solve_cyclic_circle, solve_entropic, solve_exact, solve_sorted_line


def _timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


def _circle_cost(xs, ys):
    d = np.abs(xs[:, None] - ys[None, :])
    return np.minimum(d, 1.0 - d)


def _row(solver, backend, n, seconds, mean_cost, gap=0.0, gap_bound=0.0):
    return {"solver": solver, "backend": backend, "n": int(n), "seconds": seconds,
            "mean_cost": float(mean_cost), "gap": float(gap), "gap_bound": float(gap_bound)}


def run_bench(cfg: dict, seed: int = 0) -> list[dict]:
    """Time every solver on seeded random samples.

    ``backend`` is ``default`` for the solver API (whatever backend is
    active) or the kernel name when a raw kernel is timed per backend.
    """
    rng = np.random.default_rng(seed)
    names = cfg.get("backends") or sorted(available_backends())
    kernels = {k: v for k, v in available_backends().items() if k in names}
    rows = []
    for n in cfg["sizes_1d"]:
        xs, ys = rng.random(n), rng.random(n)
        r, t = _timed(solve_sorted_line, xs, ys)
        rows.append(_row("sorted", "default", n, t, r.mean_cost))
        r, t = _timed(solve_cyclic_circle, xs, ys)
        rows.append(_row("cyclic", "default", n, t, r.mean_cost))
        if n <= cfg["cyclic_scan_max"]:
            xs_s, ys_s = np.sort(xs), np.sort(ys)
            for name, mod in kernels.items():
                (_, best, _), t = _timed(mod.cyclic_scan, xs_s, ys_s)
                rows.append(_row("cyclic-scan", name, n, t, best / n))
    if cfg.get("large_n"):
        n = cfg["large_n"]
        xs, ys = rng.random(n), rng.random(n)
        r, t = _timed(solve_sorted_line, xs, ys)
        rows.append(_row("sorted", "default", n, t, r.mean_cost))
    for n in cfg["sizes_exact"]:
        C = np.ascontiguousarray(_circle_cost(rng.random(n), rng.random(n)))
        r, t = _timed(solve_exact, CostMatrix(C))
        rows.append(_row("exact", "default", n, t, r.mean_cost))
        for name, mod in kernels.items():
            (perm, _, _), t = _timed(mod.lsap, C)
            rows.append(_row("exact-kernel", name, n, t, math.fsum(C[np.arange(n), perm]) / n))
    for n in cfg["sizes_entropic"]:
        C = CostMatrix(_circle_cost(rng.random(n), rng.random(n)))
        ref = solve_exact(C).mean_cost
        r, t = _timed(solve_entropic, C)
        rows.append(_row("entropic", "default", n, t, r.mean_cost, r.mean_cost - ref, r.gap_bound))
    return rows


__all__ = ["run_bench", "BACKEND"]
