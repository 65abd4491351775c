"""Randomized invariant suites: solver equivalence and the finite-n identities.

Each suite returns a ``SuiteResult`` naming the identity it checks, so a
violation can be reported (and turned into an exit code) by name.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analysis import partition_cover, partition_bound
from .dynsys import SystemSpec, make_system, orbit_segment, random_point
from .estimator import DEFAULT_SCHEDULE, f_sequence_segments, limit_estimate, property_check, shift_invariance_check
from .matching import CostMatrix, solve_bruteforce, solve_cyclic_circle, solve_exact, solve_sorted_line

__all__ = ["SuiteResult", "oracle_suite", "one_d_suite", "symmetry_triangle_suite",
           "shift_bound_suite", "partition_bound_suite", "SUITES", "ALL_FAMILIES"]

ALL_FAMILIES = ("identity", "rotation", "doubling", "quad-circle", "tent", "logistic", "full-shift")


@dataclass
class SuiteResult:
    name: str
    identity: str
    checks: int = 0
    worst: float = 0.0
    tolerance: float = 0.0
    violations: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.violations

    def record(self, excess: float, info: dict):
        """``excess`` > 0 is a violation (amount beyond tolerance)."""
        self.checks += 1
        self.worst = max(self.worst, excess)
        if excess > 0:
            self.violations.append(info)

    def to_dict(self) -> dict:
        return {"name": self.name, "identity": self.identity, "passed": self.passed,
                "checks": self.checks, "worst_excess": self.worst, "tolerance": self.tolerance,
                "violations": self.violations[:20], "num_violations": len(self.violations),
                **self.extra}


def oracle_suite(num: int = 200, sizes=(2, 8), seed: int = 0, rtol: float = 1e-12) -> SuiteResult:
    """Exact solver total vs enumeration of S_n on random matrices."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("oracle", "exact == bruteforce", tolerance=rtol)
    for k in range(num):
        n = int(rng.integers(sizes[0], sizes[1] + 1))
        C = CostMatrix(rng.random((n, n)))
        ex = solve_exact(C)
        bf = solve_bruteforce(C)
        ex.verify(C)
        err = abs(ex.total_cost - bf.total_cost) / max(1.0, abs(bf.total_cost))
        res.record(err - rtol, {"case": k, "n": n, "exact": ex.total_cost, "bruteforce": bf.total_cost})
        if not ex.certified_optimal:
            res.violations.append({"case": k, "n": n, "reason": "dual certificate failed"})
    return res


def one_d_suite(num: int = 50, max_n: int = 128, seed: int = 0, atol: float = 1e-10) -> SuiteResult:
    """Sorted (interval) and cyclic (circle) totals vs the exact solver."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("one-d", "specialized 1-D == exact", tolerance=atol)
    for metric in ("interval", "circle"):
        for k in range(num):
            n = int(rng.integers(1, max_n + 1))
            xs, ys = rng.random(n), rng.random(n)
            d = np.abs(xs[:, None] - ys[None, :])
            if metric == "circle":
                d = np.minimum(d, 1.0 - d)
                fast = solve_cyclic_circle(xs, ys)
            else:
                fast = solve_sorted_line(xs, ys)
            C = CostMatrix(d)
            fast.verify(C, rtol=1e-9)
            ex = solve_exact(C)
            res.record(abs(fast.total_cost - ex.total_cost) - atol,
                       {"metric": metric, "case": k, "n": n, "fast": fast.total_cost, "exact": ex.total_cost})
    return res


def _spec(family: str) -> SystemSpec:
    return make_system(family, "golden" if family == "rotation" else None)


def symmetry_triangle_suite(families=ALL_FAMILIES, triples: int = 100, n: int = 64, seed: int = 0,
                            tolerance: float = 1e-12, perturb=None) -> SuiteResult:
    """Finite-n symmetry and triangle inequality of F_n on random triples."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("symmetry-triangle", "symmetry and triangle inequality", tolerance=tolerance)
    by_identity = {"symmetry": 0, "triangle": 0}
    for fam in families:
        spec = _spec(fam)
        for k in range(triples):
            pts = [random_point(spec, rng, n) for _ in range(3)]
            rep = property_check(spec, pts, n, tolerance, perturb=perturb)
            excess = max(rep.symmetry_error, rep.triangle_violation) - tolerance
            for name in rep.violated():
                by_identity[name] += 1
            res.record(excess, {"family": fam, "case": k, "violated": rep.violated(),
                                "symmetry_error": rep.symmetry_error,
                                "triangle_violation": rep.triangle_violation})
    res.extra["violations_by_identity"] = by_identity
    return res


def shift_bound_suite(families=("rotation", "doubling", "quad-circle", "logistic"), num: int = 50,
                      n: int = 256, max_shift: int = 16, seed: int = 0) -> SuiteResult:
    """|F_n(T^r x, T^s y) - F_n(x, y)| <= (r + s) M / n + 1e-9."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("shift-bound", "shift invariance bound", tolerance=1e-9)
    for k in range(num):
        fam = families[k % len(families)]
        spec = _spec(fam)
        total = int(rng.integers(0, max_shift + 1))
        r = int(rng.integers(0, total + 1))
        s = total - r
        x = random_point(spec, rng, n + max_shift)
        y = random_point(spec, rng, n + max_shift)
        v = shift_invariance_check(spec, x, y, r, s, n)
        excess = v.detail["difference"] - v.detail["bound"]
        res.record(excess, {"family": fam, "case": k, "r": r, "s": s,
                            "difference": v.detail["difference"], "bound": v.detail["bound"]})
    return res


def partition_bound_suite(families=("rotation", "quad-circle"), pairs: int = 10, epsilons=(0.1, 0.05),
                          n: int = 4096, schedule=DEFAULT_SCHEDULE, seed: int = 0,
                          slack: float = 1e-6) -> SuiteResult:
    """fbar_hat <= eps * sum(a_s) + M (1 - sum(a_s)) + slack for every pair and eps.

    Also checks the exact finite-n form F_n <= bound(n) at every schedule point.
    """
    rng = np.random.default_rng(seed)
    res = SuiteResult("partition-bound", "partition upper bound", tolerance=slack)
    schedule = tuple(m for m in schedule if m <= n)
    if schedule[-1] != n:
        schedule = schedule + (n,)
    for fam in families:
        spec = _spec(fam)
        for k in range(pairs):
            x = random_point(spec, rng, n)
            y = random_point(spec, rng, n)
            ox, oy = orbit_segment(spec, x, n), orbit_segment(spec, y, n)
            seq = f_sequence_segments(spec, ox, oy, schedule)
            fbar = limit_estimate(seq).fbar_hat
            for eps in epsilons:
                bound = partition_bound(partition_cover(spec, ox, oy, eps), spec.diameter)
                res.record(fbar - bound - slack,
                           {"family": fam, "case": k, "epsilon": eps, "fbar_hat": fbar, "bound": bound})
                for m, v in zip(seq.schedule, seq.values):
                    bm = partition_bound(partition_cover(spec, ox, oy, eps, m), spec.diameter)
                    res.record(v - bm - slack,
                               {"family": fam, "case": k, "epsilon": eps, "n": m, "f_n": v, "bound": bm})
    return res


SUITES = {
    "oracle": oracle_suite,
    "one-d": one_d_suite,
    "symmetry-triangle": symmetry_triangle_suite,
    "shift-bound": shift_bound_suite,
    "partition-bound": partition_bound_suite,
}
