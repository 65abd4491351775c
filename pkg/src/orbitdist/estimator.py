"""Finite-n estimates of the limit quantities and the per-pair probes.

The liminf / limsup of F_n are read off a geometric schedule as the min /
max over its tail; every probe answers ``holds``, ``fails`` or
``inconclusive`` rather than forcing a yes/no out of finite data.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynsys import OrbitSegment, SpacePoint, SystemSpec, orbit_segment
from .matching import EXACT_THRESHOLD, CostMatrix, match_segments, segment_cost_matrix, solve_exact

__all__ = [
    "DEFAULT_SCHEDULE",
    "MEMBERSHIP_TOL",
    "LIMIT_TOL",
    "GENERIC_TOL",
    "HOLDS",
    "FAILS",
    "INCONCLUSIVE",
    "FSequence",
    "LimitEstimate",
    "Verdict",
    "TimeAverageReport",
    "PropertyReport",
    "Observable",
    "coordinate",
    "arc_coordinate",
    "default_battery",
    "geometric_schedule",
    "f_sequence",
    "f_sequence_segments",
    "limit_estimate",
    "nf_membership",
    "generic_probe",
    "time_average",
    "mean_gap",
    "shift_invariance_check",
    "property_check",
]

HOLDS, FAILS, INCONCLUSIVE = "holds", "fails", "inconclusive"
MEMBERSHIP_TOL = 0.05
LIMIT_TOL = 0.01
GENERIC_TOL = 0.02


def geometric_schedule(lo_exp: int = 6, hi_exp: int = 12) -> tuple[int, ...]:
    return tuple(2 ** k for k in range(lo_exp, hi_exp + 1))


DEFAULT_SCHEDULE = geometric_schedule()


def _check_schedule(schedule) -> tuple[int, ...]:
    s = tuple(int(v) for v in schedule)
    if not s or s[0] < 1 or any(b <= a for a, b in zip(s, s[1:])):
        raise ValueError("schedule must be strictly increasing positive integers")
    return s


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FSequence:
    schedule: tuple[int, ...]
    values: tuple[float, ...]
    solvers: tuple[str, ...]
    gap_bounds: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"schedule": list(self.schedule), "values": list(self.values),
                "solvers": list(self.solvers), "gap_bounds": list(self.gap_bounds)}


@dataclass(frozen=True)
class LimitEstimate:
    fbar_hat: float
    funder_hat: float
    tail_fraction: float
    tolerance: float
    tail_start: int

    @property
    def spread(self) -> float:
        return self.fbar_hat - self.funder_hat

    @property
    def converged(self) -> bool:
        return self.spread <= self.tolerance

    def to_dict(self) -> dict:
        return {"fbar_hat": self.fbar_hat, "funder_hat": self.funder_hat,
                "spread": self.spread, "converged": self.converged,
                "tail_fraction": self.tail_fraction, "tolerance": self.tolerance,
                "tail_start_n": self.tail_start}


@dataclass(frozen=True)
class Verdict:
    status: str
    margin: float
    diagnostics: str = ""
    detail: object = None

    @property
    def holds(self) -> bool:
        return self.status == HOLDS

    @property
    def fails(self) -> bool:
        return self.status == FAILS

    def to_dict(self) -> dict:
        d = {"status": self.status, "margin": self.margin, "diagnostics": self.diagnostics}
        if hasattr(self.detail, "to_dict"):
            d["detail"] = self.detail.to_dict()
        elif isinstance(self.detail, dict):
            d["detail"] = self.detail
        return d


# ---------------------------------------------------------------------------
# F_n sequences
# ---------------------------------------------------------------------------

def f_sequence_segments(spec: SystemSpec, ox: OrbitSegment, oy: OrbitSegment, schedule,
                        solver: str = "auto", exact_threshold: int = EXACT_THRESHOLD) -> FSequence:
    """F_n for every n in ``schedule`` using prefixes of two precomputed orbits."""
    schedule = _check_schedule(schedule)
    values, tags, gaps = [], [], []
    for n in schedule:
        res = match_segments(spec.space, ox.prefix(n), oy.prefix(n), solver, exact_threshold)
        values.append(min(res.mean_cost, spec.diameter))
        tags.append(res.solver)
        gaps.append(res.gap_bound)
    return FSequence(schedule, tuple(values), tuple(tags), tuple(gaps))


def f_sequence(spec: SystemSpec, x: SpacePoint, y: SpacePoint, schedule=DEFAULT_SCHEDULE,
               solver: str = "auto", exact_threshold: int = EXACT_THRESHOLD) -> FSequence:
    schedule = _check_schedule(schedule)
    N = schedule[-1]
    ox = orbit_segment(spec, x, N)
    oy = ox if y == x else orbit_segment(spec, y, N)
    return f_sequence_segments(spec, ox, oy, schedule, solver, exact_threshold)


def limit_estimate(seq: FSequence, tail_fraction: float = 0.5, tolerance: float = LIMIT_TOL) -> LimitEstimate:
    """Tail max / min of an F_n sequence as limsup / liminf estimates."""
    if not seq.values:
        raise ValueError("empty sequence")
    if not (0 < tail_fraction <= 1):
        raise ValueError("tail_fraction must lie in (0, 1]")
    m = len(seq.values)
    k = math.ceil(tail_fraction * m)
    tail = seq.values[m - k:]
    return LimitEstimate(max(tail), min(tail), tail_fraction, tolerance, seq.schedule[m - k])


def nf_membership(spec: SystemSpec, x: SpacePoint, y: SpacePoint, schedule=DEFAULT_SCHEDULE,
                  tol: float = MEMBERSHIP_TOL, solver: str = "auto",
                  limit_tol: float = LIMIT_TOL, seq: FSequence | None = None) -> Verdict:
    """Is F(x, y) = 0?  ``holds`` / ``fails`` / ``inconclusive``.

    A ``fails`` verdict also places the pair outside the zero set of the
    liminf, since the tail minimum already exceeds ``tol``.
    """
    if seq is None:
        seq = f_sequence(spec, x, y, schedule, solver)
    est = limit_estimate(seq, tolerance=limit_tol)
    detail = {"sequence": seq.to_dict(), "estimate": est.to_dict(), "tol": tol}
    if est.funder_hat > tol:
        return Verdict(FAILS, est.funder_hat - tol,
                       f"tail minimum {est.funder_hat:.6g} exceeds tol {tol}", detail)
    if est.converged and est.fbar_hat <= tol:
        return Verdict(HOLDS, tol - est.fbar_hat,
                       f"tail maximum {est.fbar_hat:.6g} within tol {tol}", detail)
    return Verdict(INCONCLUSIVE, est.spread,
                   f"spread {est.spread:.6g} above limit tolerance {limit_tol}", detail)


# ---------------------------------------------------------------------------
# observables and time averages
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Observable:
    """A bounded function of the float coordinate of a point."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    lo: float = 0.0
    hi: float = 1.0

    def __call__(self, coords):
        return self.fn(np.asarray(coords, dtype=np.float64))


coordinate = Observable("coordinate", lambda t: t)
# 2 d(t, 0) on the circle: continuous there, unlike the raw coordinate
arc_coordinate = Observable("arc", lambda t: 2.0 * np.minimum(t % 1.0, 1.0 - t % 1.0))


def _cell(k: int, m: int = 8) -> Observable:
    lo, hi = k / m, (k + 1) / m
    return Observable(f"cell[{k}/{m},{k + 1}/{m})", lambda t: ((t >= lo) & (t < hi)).astype(float))


def _bump(center: float, width: float = 0.125) -> Observable:
    def f(t):
        r = np.abs(t - center) / width
        out = np.zeros_like(r)
        inside = r < 1
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
        return out
    return Observable(f"bump({center})", f)


def default_battery() -> tuple[Observable, ...]:
    """Coordinate, the 8 dyadic cells of width 1/8 and 4 smooth bumps."""
    return ((coordinate,) + tuple(_cell(k) for k in range(8))
            + tuple(_bump(c) for c in (0.125, 0.375, 0.625, 0.875)))


OBSERVABLES = {o.name: o for o in (coordinate, arc_coordinate) + default_battery()}


@dataclass(frozen=True)
class TimeAverageReport:
    observable: str
    base: SpacePoint
    schedule: tuple[int, ...]
    partial_averages: tuple[float, ...]
    fstar_hat: float
    oscillation: float
    tail_rise: float = 0.0
    tail_fall: float = 0.0

    def to_dict(self, full: bool = True) -> dict:
        d = {"observable": self.observable, "fstar_hat": self.fstar_hat,
             "oscillation": self.oscillation, "tail_rise": self.tail_rise,
             "tail_fall": self.tail_fall}
        if full:
            d["schedule"] = list(self.schedule)
            d["partial_averages"] = list(self.partial_averages)
        return d


def _partial_averages(values: np.ndarray, schedule) -> np.ndarray:
    cs = np.cumsum(values)
    idx = np.asarray(schedule) - 1
    return cs[idx] / np.asarray(schedule, dtype=np.float64)


def time_average_segment(f: Observable, orbit: OrbitSegment, schedule,
                         tail_fraction: float = 0.5) -> TimeAverageReport:
    schedule = _check_schedule(schedule)
    if schedule[-1] > orbit.length:
        raise ValueError("schedule runs past the orbit")
    avgs = _partial_averages(f(orbit.coords[: schedule[-1]]), schedule)
    k = math.ceil(tail_fraction * len(avgs))
    tail = avgs[len(avgs) - k:]
    # largest upward / downward excursion along the tail, in order
    run_min = np.minimum.accumulate(tail)
    run_max = np.maximum.accumulate(tail)
    rise = float((tail - run_min).max())
    fall = float((run_max - tail).max())
    return TimeAverageReport(f.name, orbit.base, schedule, tuple(float(a) for a in avgs),
                             float(avgs[-1]), float(tail.max() - tail.min()), rise, fall)


def time_average(spec: SystemSpec, f: Observable, x: SpacePoint, schedule=DEFAULT_SCHEDULE,
                 tail_fraction: float = 0.5) -> TimeAverageReport:
    """Cesaro averages (1/n) sum_{k=1..n} f(T^k x) at each schedule point."""
    schedule = _check_schedule(schedule)
    orbit = orbit_segment(spec, x, schedule[-1])
    return time_average_segment(f, orbit, schedule, tail_fraction)


def generic_probe(spec: SystemSpec, x: SpacePoint, observables: Sequence[Observable] | None = None,
                  schedule=DEFAULT_SCHEDULE, tol: float = GENERIC_TOL,
                  orbit: OrbitSegment | None = None) -> Verdict:
    """Do the time averages of a fixed observable battery settle down?

    Averages are inspected at every n in the last half of ``[1, max(schedule)]``,
    since block-structured orbits can look converged on a geometric grid.
    ``fails`` needs oscillation above 3 tol with both an upward and a
    downward swing above tol.
    """
    schedule = _check_schedule(schedule)
    N = schedule[-1]
    obs = tuple(observables) if observables else default_battery()
    if orbit is None:
        orbit = orbit_segment(spec, x, N)
    dense = tuple(range(1, N + 1))
    reports = [time_average_segment(o, orbit, dense) for o in obs]
    worst = max(reports, key=lambda r: r.oscillation)
    summary = {r.observable: r.to_dict(full=False) for r in reports}
    if all(r.oscillation <= tol for r in reports):
        return Verdict(HOLDS, tol - worst.oscillation,
                       f"max tail oscillation {worst.oscillation:.6g} ({worst.observable})", summary)
    for r in sorted(reports, key=lambda r: -r.oscillation):
        if r.oscillation > 3 * tol and r.tail_rise > tol and r.tail_fall > tol:
            return Verdict(FAILS, r.oscillation - 3 * tol,
                           f"{r.observable} averages oscillate by {r.oscillation:.6g}", summary)
    return Verdict(INCONCLUSIVE, worst.oscillation,
                   f"tail oscillation {worst.oscillation:.6g} ({worst.observable}) above tol {tol}",
                   summary)


# ---------------------------------------------------------------------------
# finite-n identities
# ---------------------------------------------------------------------------

def _aligned_gap(spec: SystemSpec, ox: OrbitSegment, oy: OrbitSegment) -> float:
    if spec.space.kind == "shift":
        neq = ox.windows != oy.windows
        d = 2.0 ** -neq.argmax(axis=1).astype(float)
        d[~neq.any(axis=1)] = 0.0
    else:
        d = np.abs(ox.coords - oy.coords)
        if spec.space.kind == "circle":
            d = np.minimum(d, 1.0 - d)
    return math.fsum(d) / ox.length


def mean_gap(spec: SystemSpec, x: SpacePoint, y: SpacePoint, n: int) -> float:
    """(1/n) sum_{k=1..n} d(T^k x, T^k y): the time-aligned Cesaro distance."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return _aligned_gap(spec, orbit_segment(spec, x, n), orbit_segment(spec, y, n))


def shift_invariance_check(spec: SystemSpec, x: SpacePoint, y: SpacePoint, r: int, s: int, n: int,
                           solver: str = "auto") -> Verdict:
    """|F_n(T^r x, T^s y) - F_n(x, y)| <= (r + s) M / n.

    Shifting a window by r replaces r of its n atoms, which moves the empirical
    measure by at most r M / n in transport distance.
    """
    if r < 0 or s < 0:
        raise ValueError("shifts must be nonnegative")
    if n <= r + s:
        raise ValueError("n must exceed r + s")
    ox = orbit_segment(spec, x, n + r)
    oy = orbit_segment(spec, y, n + s)
    base = match_segments(spec.space, ox.prefix(n), oy.prefix(n), solver).mean_cost
    shifted = match_segments(spec.space, ox.window(r, n), oy.window(s, n), solver).mean_cost
    diff = abs(shifted - base)
    bound = (r + s) * spec.diameter / n + 1e-9
    detail = {"f_n": base, "f_n_shifted": shifted, "difference": diff, "bound": bound,
              "r": r, "s": s, "n": n}
    status = HOLDS if diff <= bound else FAILS
    return Verdict(status, bound - diff if status == HOLDS else diff - bound,
                   f"difference {diff:.3g} vs bound {bound:.3g}", detail)


@dataclass(frozen=True)
class PropertyReport:
    n: int
    values: dict
    symmetry_error: float
    triangle_violation: float
    tolerance: float

    @property
    def symmetric(self) -> bool:
        return self.symmetry_error <= self.tolerance

    @property
    def triangle(self) -> bool:
        return self.triangle_violation <= self.tolerance

    @property
    def ok(self) -> bool:
        return self.symmetric and self.triangle

    def violated(self) -> list[str]:
        out = []
        if not self.symmetric:
            out.append("symmetry")
        if not self.triangle:
            out.append("triangle")
        return out

    def to_dict(self) -> dict:
        return {"n": self.n, "values": dict(self.values), "symmetry_error": self.symmetry_error,
                "triangle_violation": self.triangle_violation, "tolerance": self.tolerance,
                "ok": self.ok, "violated": self.violated()}


def property_check(spec: SystemSpec, points, n: int, tolerance: float = 1e-12,
                   perturb: Callable[[CostMatrix], CostMatrix] | None = None) -> PropertyReport:
    """Finite-n symmetry and triangle inequality for a triple of points.

    All six ordered values come from the exact solver; the reversed direction
    of each pair is solved on the transposed cost matrix (optionally passed
    through ``perturb``, which is how fault injection reaches the check).
    """
    if len(points) != 3:
        raise ValueError("need exactly three points")
    orbits = [orbit_segment(spec, p, n) for p in points]
    names = "xyz"
    vals = {}
    for i in range(3):
        for j in range(i + 1, 3):
            C = segment_cost_matrix(spec.space, orbits[i], orbits[j])
            vals[names[i] + names[j]] = solve_exact(C).mean_cost
            Ct = C.T if perturb is None else perturb(C.T)
            vals[names[j] + names[i]] = solve_exact(Ct).mean_cost
    sym = max(abs(vals[a + b] - vals[b + a]) for a, b in ("xy", "xz", "yz"))
    tri = 0.0
    for a, b, c in itertools.permutations("xyz"):
        tri = max(tri, vals[a + c] - vals[a + b] - vals[b + c])
    return PropertyReport(n, vals, sym, max(tri, 0.0), tolerance)
