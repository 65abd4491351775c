"""Minimum-cost matching between orbit segments.

F_n(x, y) is the cheapest way to pair the first n points of the orbit of x
with those of y, averaged over n.  Several solvers compute it:

``bruteforce``  enumerate S_n (n <= 9), the reference oracle
``exact``       shortest augmenting path with a dual certificate, O(n^3)
``sorted``      interval metric: pair by rank, O(n log n)
``cyclic``      circle metric: best cyclic offset between sorted samples
``entropic``    log-domain Sinkhorn, rounded, with a duality-gap bound
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ._backend import kernels
from .dynsys import MetricSpaceDescriptor, OrbitSegment, SpacePoint, SystemSpec, orbit_segment

__all__ = [
    "CostMatrix",
    "MatchingResult",
    "SolverDidNotConverge",
    "SOLVERS",
    "cost_matrix",
    "segment_cost_matrix",
    "solve_bruteforce",
    "solve_exact",
    "solve_sorted_line",
    "solve_cyclic_circle",
    "solve_entropic",
    "match_segments",
    "f_n",
    "EXACT_THRESHOLD",
]

SOLVERS = ("auto", "exact", "bruteforce", "sorted", "cyclic", "entropic")
EXACT_THRESHOLD = 512
BRUTEFORCE_MAX = 9
# above this size the cyclic solver locates the optimal offset by the level
# median of the CDF difference instead of scanning all n offsets
CYCLIC_SCAN_MAX = 4096


class SolverDidNotConverge(RuntimeError):
    """An approximate solver stopped before meeting its tolerance."""


@dataclass(frozen=True, eq=False)
class CostMatrix:
    entries: np.ndarray
    diameter: float = math.inf
    error_bound: float = 0.0

    def __post_init__(self):
        e = np.array(self.entries, dtype=np.float64, order="C")
        if e.ndim != 2 or e.shape[0] != e.shape[1] or e.shape[0] < 1:
            raise ValueError("cost matrix must be square and non-empty")
        if not np.isfinite(e).all():
            raise ValueError("cost entries must be finite")
        if (e < 0).any():
            raise ValueError("cost entries must be nonnegative")
        if (e > self.diameter * (1 + 1e-12)).any():
            raise ValueError("cost entry exceeds the space diameter")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def T(self) -> "CostMatrix":
        return CostMatrix(self.entries.T, self.diameter, self.error_bound)


@dataclass(frozen=True, eq=False)
class MatchingResult:
    """A permutation (0-based: row k is paired with column permutation[k]) and its cost."""

    permutation: np.ndarray
    total_cost: float
    solver: str
    certified_optimal: bool
    gap_bound: float = 0.0
    status: str = "optimal"
    iterations: int = 0

    @property
    def n(self) -> int:
        return len(self.permutation)

    @property
    def mean_cost(self) -> float:
        return self.total_cost / self.n

    def verify(self, C: CostMatrix, rtol: float = 1e-12) -> None:
        """Check the bijection and the recomputed cost; raise on mismatch."""
        p = np.asarray(self.permutation)
        if p.shape != (C.n,) or not np.array_equal(np.sort(p), np.arange(C.n)):
            raise AssertionError("permutation is not a bijection")
        recomputed = math.fsum(C.entries[np.arange(C.n), p])
        if abs(recomputed - self.total_cost) > rtol * max(1.0, abs(recomputed)):
            raise AssertionError(f"total cost {self.total_cost} != recomputed {recomputed}")


def _total(C: np.ndarray, perm: np.ndarray) -> float:
    return math.fsum(C[np.arange(len(perm)), perm])


# ---------------------------------------------------------------------------
# cost matrices
# ---------------------------------------------------------------------------

def _first_mismatch_cost(wx: np.ndarray, wy: np.ndarray, block: int = 64) -> np.ndarray:
    n, w = wx.shape
    out = np.empty((n, wy.shape[0]))
    pow2 = 2.0 ** -np.arange(w)
    for i0 in range(0, n, block):
        neq = wx[i0:i0 + block, None, :] != wy[None, :, :]
        first = neq.argmax(axis=-1)
        d = pow2[first]
        d[~neq.any(axis=-1)] = 0.0
        out[i0:i0 + block] = d
    return out


def pairwise_distances(space: MetricSpaceDescriptor, a: OrbitSegment, b: OrbitSegment) -> np.ndarray:
    if space.kind == "shift":
        return _first_mismatch_cost(a.windows, b.windows)
    d = np.abs(a.coords[:, None] - b.coords[None, :])
    if space.kind == "circle":
        np.minimum(d, 1.0 - d, out=d)
    return d


def segment_cost_matrix(space: MetricSpaceDescriptor, a: OrbitSegment, b: OrbitSegment) -> CostMatrix:
    if a.length != b.length:
        raise ValueError("segments differ in length")
    # float64 views of the coordinates are truncated to 53 bits
    eb = a.error_bound + b.error_bound + (0.0 if space.kind == "shift" else 2.0 ** -52)
    return CostMatrix(pairwise_distances(space, a, b), space.diameter, eb)


def cost_matrix(spec: SystemSpec, x: SpacePoint, y: SpacePoint, n: int) -> CostMatrix:
    """entries[i][j] = d(T^(i+1) x, T^(j+1) y) for i, j < n."""
    return segment_cost_matrix(spec.space, orbit_segment(spec, x, n), orbit_segment(spec, y, n))


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

def solve_bruteforce(C: CostMatrix) -> MatchingResult:
    """Literal minimum over all n! permutations."""
    n = C.n
    if n > BRUTEFORCE_MAX:
        raise ValueError(f"brute force is limited to n <= {BRUTEFORCE_MAX}, got {n}")
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    totals = C.entries[np.arange(n), perms].sum(axis=1)
    best = perms[int(np.argmin(totals))]
    return MatchingResult(best, _total(C.entries, best), "bruteforce", True)


def _certify(C: np.ndarray, perm: np.ndarray, u: np.ndarray, v: np.ndarray, total: float) -> bool:
    scale = max(1.0, float(np.abs(C).max()))
    tol = 1e-9 * scale
    feasible = bool((u[:, None] + v[None, :] <= C + tol).all())
    slack = C[np.arange(len(perm)), perm] - u - v[perm]
    tight = bool((np.abs(slack) <= tol).all())
    dual = math.fsum(u) + math.fsum(v)
    return feasible and tight and abs(dual - total) <= tol * len(perm)


def solve_exact(C: CostMatrix) -> MatchingResult:
    """Shortest augmenting path assignment, certified by its duals."""
    perm, u, v = kernels.lsap(C.entries)
    perm = np.asarray(perm, dtype=np.intp)
    total = _total(C.entries, perm)
    ok = _certify(C.entries, perm, np.asarray(u), np.asarray(v), total)
    return MatchingResult(perm, total, "exact", ok)


def _sorted_pairs(xs, ys):
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be 1-D and of equal length")
    if xs.size == 0:
        raise ValueError("empty samples")
    ix = np.argsort(xs, kind="stable")
    iy = np.argsort(ys, kind="stable")
    return xs, ys, ix, iy


def solve_sorted_line(xs, ys) -> MatchingResult:
    """Rank matching on the line; optimal for the metric |p - q|."""
    xs, ys, ix, iy = _sorted_pairs(xs, ys)
    perm = np.empty(len(xs), dtype=np.intp)
    perm[ix] = iy
    total = math.fsum(np.abs(xs[ix] - ys[iy]))
    return MatchingResult(perm, total, "sorted", True)


def _circle_gaps(a, b):
    d = np.abs(a - b)
    return np.minimum(d, 1.0 - d)


def _level_median_offset(xs_sorted, ys_sorted) -> int:
    """Offset t minimizing sum_k d(x_(k), y_(k+t)) via the CDF-difference level median.

    W1 on the circle is min over theta of the integral of |F - G - theta|;
    the minimizing theta is a weighted median of F - G, which only takes
    values j/n, and the matching it induces pairs x_(k) with y_(k-j).
    """
    n = len(xs_sorted)
    vals = np.concatenate([xs_sorted, ys_sorted])
    steps = np.concatenate([np.ones(n, dtype=np.int64), -np.ones(n, dtype=np.int64)])
    order = np.argsort(vals, kind="stable")
    vals = vals[order]
    level = np.cumsum(steps[order])
    lengths = np.diff(np.append(vals, 1.0))
    # the segment [0, first value) sits at level 0
    lv = np.append(level, 0)
    ln = np.append(lengths, vals[0])
    srt = np.argsort(lv, kind="stable")
    cum = np.cumsum(ln[srt])
    j = int(lv[srt][np.searchsorted(cum, 0.5 * cum[-1])])
    return (-j) % n


def solve_cyclic_circle(xs, ys, method: str = "auto") -> MatchingResult:
    """Best order-preserving cyclic matching of two circle samples.

    ``method="scan"`` tries all n offsets; ``"median"`` jumps to the optimal
    offset in O(n log n); ``"auto"`` scans up to ``CYCLIC_SCAN_MAX`` points.
    """
    xs, ys, ix, iy = _sorted_pairs(xs, ys)
    xs = xs - np.floor(xs)
    ys = ys - np.floor(ys)
    n = len(xs)
    xs_s = np.ascontiguousarray(xs[ix])
    ys_s = np.ascontiguousarray(ys[iy])
    if method == "auto":
        method = "scan" if n <= CYCLIC_SCAN_MAX else "median"
    if method == "scan":
        t = int(kernels.cyclic_scan(xs_s, ys_s)[0])
    elif method == "median":
        t = _level_median_offset(xs_s, ys_s)
    else:
        raise ValueError(f"unknown cyclic method {method!r}")
    cols = np.roll(np.arange(n), -t)
    perm = np.empty(n, dtype=np.intp)
    perm[ix] = iy[cols]
    total = math.fsum(_circle_gaps(xs_s, ys_s[cols]))
    return MatchingResult(perm, total, "cyclic", True)


def _greedy_permutation(plan: np.ndarray) -> np.ndarray:
    n = plan.shape[0]
    order = np.argsort(plan, axis=None, kind="stable")[::-1]
    rows, cols = np.unravel_index(order, plan.shape)
    perm = np.full(n, -1, dtype=np.intp)
    col_used = np.zeros(n, dtype=bool)
    left = n
    for i, j in zip(rows.tolist(), cols.tolist()):
        if perm[i] == -1 and not col_used[j]:
            perm[i] = j
            col_used[j] = True
            left -= 1
            if left == 0:
                break
    return perm


def _round_to_coupling(plan, a, b):
    """Project a near-feasible plan onto the transport polytope."""
    r = np.minimum(a / np.maximum(plan.sum(axis=1), 1e-300), 1.0)
    plan = plan * r[:, None]
    c = np.minimum(b / np.maximum(plan.sum(axis=0), 1e-300), 1.0)
    plan = plan * c[None, :]
    ea = a - plan.sum(axis=1)
    eb = b - plan.sum(axis=0)
    s = ea.sum()
    if s > 0:
        plan = plan + np.outer(ea, eb) / s
    return plan


_ABSORB = 30.0


def solve_entropic(C: CostMatrix, epsilon: float = 1e-3, max_iters: int = 20000,
                   tol: float = 1e-7, gap_tol: float | None = None) -> MatchingResult:
    """Entropic transport with epsilon scaling, rounded to a permutation.

    The permutation is read greedily off the rounded plan; its cost is
    compared with a c-transformed dual lower bound, and the difference is the
    reported gap.  The run counts as converged when the marginals meet
    ``tol`` or the certified gap is at most ``gap_tol`` (default 10 epsilon);
    otherwise, after ``max_iters`` sweeps, the result is ``inconclusive``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    M = C.entries
    n = C.n
    if not M.any():
        return MatchingResult(np.arange(n), 0.0, "entropic", False, 0.0, "optimal")
    a = np.full(n, 1.0 / n)
    loga = np.log(a)
    f = np.zeros(n)
    g = np.zeros(n)
    eps = max(float(M.max()), epsilon)
    iters = 0
    err = math.inf
    while True:
        stage_tol = tol if eps <= epsilon else max(tol, 1e-3 * eps)
        # scaling iterations on a kernel stabilized by the current potentials;
        # the potentials absorb the scalings before these overflow
        f = eps * (loga - logsumexp((g[None, :] - M) / eps, axis=1))
        K = np.exp((f[:, None] + g[None, :] - M) / eps)
        u = np.ones(n)
        v = np.ones(n)
        while iters < max_iters:
            Ktu = K.T @ u
            if not (Ktu > 0).all():
                break
            v = a / Ktu
            Kv = K @ v
            if not (Kv > 0).all():
                break
            u = a / Kv
            iters += 1
            if max(np.abs(np.log(u)).max(), np.abs(np.log(v)).max()) > _ABSORB:
                f += eps * np.log(u)
                g += eps * np.log(v)
                K = np.exp((f[:, None] + g[None, :] - M) / eps)
                u[:] = 1.0
                v[:] = 1.0
            if iters % 10 == 0 or iters == max_iters:
                # column marginals are exact right after the v update
                err = float(np.abs(v * (K.T @ u) - a).sum())
                if err <= stage_tol:
                    break
        f += eps * np.log(u)
        g += eps * np.log(v)
        # one exact log-domain sweep cleans up any underflowed kernel entries
        g = eps * (loga - logsumexp((f[:, None] - M) / eps, axis=0))
        # the scaling loop stops early only if the kernel underflowed
        while err > stage_tol and iters < max_iters:
            f = eps * (loga - logsumexp((g[None, :] - M) / eps, axis=1))
            g = eps * (loga - logsumexp((f[:, None] - M) / eps, axis=0))
            iters += 1
            if iters % 10 == 0 or iters == max_iters:
                row = np.exp(logsumexp((f[:, None] + g[None, :] - M) / eps, axis=1))
                err = float(np.abs(row - a).sum())
                if err <= stage_tol:
                    break
        if eps <= epsilon or iters >= max_iters:
            break
        eps = max(eps / 2.0, epsilon)
    plan = np.exp((f[:, None] + g[None, :] - M) / eps)
    plan = _round_to_coupling(plan, a, a)
    perm = _greedy_permutation(plan)
    total = _total(M, perm)
    # c-transforms make the potentials dual feasible
    g_ct = (M - f[:, None]).min(axis=0)
    f_ct = (M - g_ct[None, :]).min(axis=1)
    lower = (math.fsum(f_ct) + math.fsum(g_ct)) / n
    gap = max(0.0, total / n - lower)
    if gap_tol is None:
        gap_tol = 10.0 * epsilon
    status = "approximate" if (err <= tol or gap <= gap_tol) else "inconclusive"
    return MatchingResult(perm, total, "entropic", gap <= 1e-15, gap, status, iters)


# ---------------------------------------------------------------------------
# F_n
# ---------------------------------------------------------------------------

def _choose_solver(space: MetricSpaceDescriptor, solver: str, n: int, exact_threshold: int) -> str:
    if solver not in SOLVERS:
        raise ValueError(f"unknown solver {solver!r}; choose from {SOLVERS}")
    if solver == "auto":
        if space.kind == "interval":
            return "sorted"
        if space.kind == "circle":
            return "cyclic"
        return "exact" if n <= exact_threshold else "entropic"
    if solver == "sorted" and space.kind != "interval":
        raise ValueError("the sorted solver needs the interval metric")
    if solver == "cyclic" and space.kind != "circle":
        raise ValueError("the cyclic solver needs the circle metric")
    return solver


def match_segments(space: MetricSpaceDescriptor, a: OrbitSegment, b: OrbitSegment,
                   solver: str = "auto", exact_threshold: int = EXACT_THRESHOLD,
                   epsilon: float = 1e-3, max_iters: int = 20000) -> MatchingResult:
    """Optimal (or certified-approximate) matching between two equal-length segments."""
    if a.length != b.length:
        raise ValueError("segments differ in length")
    which = _choose_solver(space, solver, a.length, exact_threshold)
    if which == "sorted":
        return solve_sorted_line(a.coords, b.coords)
    if which == "cyclic":
        return solve_cyclic_circle(a.coords, b.coords)
    C = segment_cost_matrix(space, a, b)
    if which == "exact":
        return solve_exact(C)
    if which == "bruteforce":
        return solve_bruteforce(C)
    res = solve_entropic(C, epsilon, max_iters)
    if res.status == "inconclusive":
        raise SolverDidNotConverge(
            f"entropic solver did not converge in {res.iterations} iterations (n={a.length})")
    return res


def f_n(spec: SystemSpec, x: SpacePoint, y: SpacePoint, n: int, solver: str = "auto",
        exact_threshold: int = EXACT_THRESHOLD) -> float:
    """min over permutations s of (1/n) sum_{k=1..n} d(T^k x, T^s(k) y)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    a = orbit_segment(spec, x, n)
    b = orbit_segment(spec, y, n)
    return match_segments(spec.space, a, b, solver, exact_threshold).mean_cost
