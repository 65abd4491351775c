"""System-level probes built on F_n.

Theorems that quantify over all of X, or over a measure, are probed on
seeded random samples plus a few hand-picked points (fixed points, the
period-2 orbit of the quad-circle map) where a counterexample would live.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .dynsys import (
    OrbitSegment,
    SpacePoint,
    SystemSpec,
    distance,
    orbit_segment,
    perturbed_point,
    random_point,
)
from .estimator import (
    DEFAULT_SCHEDULE,
    FAILS,
    HOLDS,
    INCONCLUSIVE,
    LIMIT_TOL,
    MEMBERSHIP_TOL,
    Observable,
    Verdict,
    _aligned_gap,
    _check_schedule,
    default_battery,
    f_sequence_segments,
    generic_probe,
    limit_estimate,
    nf_membership,
    time_average_segment,
)
from .matching import match_segments

__all__ = [
    "PartitionCover",
    "EquicontinuityScan",
    "MeasureProbeReport",
    "TimeAverageScan",
    "LebesgueSampler",
    "AtomicSampler",
    "PointMassSampler",
    "OrbitTailSampler",
    "adversarial_points",
    "partition_cover",
    "best_partition_cover",
    "partition_bound",
    "wme_scan",
    "unique_ergodicity_probe",
    "ergodicity_probe",
    "physical_probe",
    "ta_continuity_scan",
]

MASS_THRESHOLD = 0.05


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def adversarial_points(spec: SystemSpec) -> list[SpacePoint]:
    """Fixed points and short periodic orbits where probes are most likely to break."""
    fam = spec.family
    if fam == "doubling":
        return [SpacePoint.at(0)]
    if fam == "quad-circle":
        return [SpacePoint.at(0), SpacePoint.at(Fraction(1, 2))]
    if fam == "tent":
        s = spec.param
        pts = [SpacePoint.at(0)]
        if s > 1:
            pts.append(SpacePoint.at(s / (1 + s)))
        return pts
    if fam == "logistic":
        r = spec.param
        pts = [SpacePoint.at(0)]
        if r > 1:
            pts.append(SpacePoint.at(1 - 1 / r))
        return pts
    if fam == "full-shift":
        return []  # need buffers sized to the horizon; built in _adversarial
    return []


def _adversarial(spec: SystemSpec, horizon: int) -> list[SpacePoint]:
    if spec.family == "full-shift":
        size = horizon + spec.space.window + 1
        return [SpacePoint.word([0] * size)]
    return adversarial_points(spec)


def _point_key(p: SpacePoint):
    return p.symbols if p.is_symbolic else p.value


# ---------------------------------------------------------------------------
# partition covers and the partition upper bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PartitionCover:
    """Regular cells of width <= epsilon with the common occupancy a_s of two orbits."""

    epsilon: float
    cells: int
    n: int
    freq_x: np.ndarray = field(repr=False)
    freq_y: np.ndarray = field(repr=False)
    kind: str = "liminf"

    @property
    def a(self) -> np.ndarray:
        return np.minimum(self.freq_x, self.freq_y)

    @property
    def covered_mass(self) -> float:
        return float(math.fsum(self.a))

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.cells + 1)

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "cells": self.cells, "n": self.n,
                "covered_mass": self.covered_mass, "kind": self.kind}


def _frequencies(coords: np.ndarray, cells: int) -> np.ndarray:
    idx = np.minimum((coords * cells).astype(np.int64), cells - 1)
    return np.bincount(idx, minlength=cells) / len(coords)


def partition_cover(spec: SystemSpec, orbit_x: OrbitSegment, orbit_y: OrbitSegment, epsilon: float,
                    n: int | None = None) -> PartitionCover:
    """Bin both orbit prefixes into ceil(1/epsilon) equal cells.

    Cells are half-open so they are disjoint; their diameter is the cell
    width on the interval and on the circle alike.
    """
    if spec.space.kind == "shift":
        raise ValueError("partition covers are defined for the interval and the circle")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    n = min(orbit_x.length, orbit_y.length) if n is None else n
    cells = math.ceil(1.0 / epsilon - 1e-12)
    fx = _frequencies(orbit_x.coords[:n], cells)
    fy = _frequencies(orbit_y.coords[:n], cells)
    return PartitionCover(float(epsilon), cells, n, fx, fy)


def best_partition_cover(spec: SystemSpec, orbit_x: OrbitSegment, orbit_y: OrbitSegment,
                         epsilon: float, schedule) -> PartitionCover:
    """Cover for the liminf variant: frequencies along the most favourable n of ``schedule``."""
    covers = [partition_cover(spec, orbit_x, orbit_y, epsilon, n) for n in _check_schedule(schedule)]
    best = max(covers, key=lambda c: c.covered_mass)
    return PartitionCover(best.epsilon, best.cells, best.n, best.freq_x, best.freq_y, "subsequence")


def partition_bound(cover: PartitionCover, M: float, lower: bool = False) -> float:
    """epsilon * sum(a_s) + M * (1 - sum(a_s)).

    With ``lower=False`` this bounds the limsup of F_n given liminf occupancy
    frequencies; with ``lower=True`` it bounds the liminf and the cover must
    come from frequencies along a subsequence (``best_partition_cover``).
    """
    if lower and cover.kind != "subsequence":
        raise ValueError("the liminf bound needs a subsequence cover")
    s = min(cover.covered_mass, 1.0)
    return cover.epsilon * s + M * (1.0 - s)


# ---------------------------------------------------------------------------
# weak mean equicontinuity scan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EquicontinuityScan:
    deltas: tuple[float, ...]
    modulus: tuple[float, ...]
    contrast_modulus: tuple[float, ...]
    rung_modulus: tuple[float, ...]
    rung_contrast: tuple[float, ...]
    n: int
    pairs: tuple[dict, ...]

    def rows(self):
        return list(zip(self.deltas, self.modulus, self.contrast_modulus))

    def to_dict(self) -> dict:
        return {"n": self.n, "deltas": list(self.deltas), "modulus": list(self.modulus),
                "contrast_modulus": list(self.contrast_modulus),
                "rung_modulus": list(self.rung_modulus), "rung_contrast": list(self.rung_contrast),
                "pairs": list(self.pairs)}


def _grid(spec: SystemSpec, grid_size: int, rng, horizon: int) -> list[SpacePoint]:
    adv = _adversarial(spec, horizon)[:grid_size]
    return adv + [random_point(spec, rng, horizon) for _ in range(grid_size - len(adv))]


def _partners(spec: SystemSpec, base: SpacePoint, delta: float, rng, horizon: int) -> list[SpacePoint]:
    """Points at distance <= delta from ``base`` (1-D: one on each side)."""
    if spec.space.kind == "shift":
        j = max(0, math.ceil(-math.log2(delta)))
        size = max(len(base.symbols), horizon + spec.space.window + 1)
        tail = rng.integers(0, spec.space.alphabet_size, size=size)
        sym = list(base.symbols[:j]) + [0] * max(0, j - len(base.symbols))
        k = spec.space.alphabet_size
        sym.append((base.symbols[j] + 1 + int(rng.integers(0, k - 1))) % k if j < len(base.symbols) else 0)
        sym.extend(int(t) for t in tail[len(sym):])
        return [SpacePoint.word(sym)]
    # the random trailing digits (< 2**-64) must not push the pair beyond delta
    d = Fraction(delta)
    return [perturbed_point(spec, base, d - Fraction(1, 1 << 62), rng, horizon),
            perturbed_point(spec, base, -d, rng, horizon)]


def wme_scan(spec: SystemSpec, grid_size: int = 8, delta_ladder: Sequence[float] = (0.1, 0.05, 0.01, 1e-3, 1e-4),
             n: int = 2048, solver: str = "auto", seed: int = 0) -> EquicontinuityScan:
    """Moduli of F_n and of the aligned Cesaro gap over pairs at distance <= delta.

    ``modulus[i]`` is the max F_n over every evaluated pair within
    ``deltas[i]``; with the ladder sorted decreasingly this is automatically
    monotone.  ``rung_*`` keep the per-rung maxima before monotonizing.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    deltas = tuple(sorted((float(d) for d in delta_ladder), reverse=True))
    if not deltas or deltas[-1] <= 0 or deltas[0] > spec.diameter:
        raise ValueError("delta values must lie in (0, M]")
    rng = _rng(seed)
    grid = _grid(spec, grid_size, rng, n)
    records = []
    rung_mod, rung_con = [], []
    for delta in deltas:
        best_f = best_g = 0.0
        for b in grid:
            ob = orbit_segment(spec, b, n)
            for p in _partners(spec, b, delta, rng, n):
                op = orbit_segment(spec, p, n)
                fv = match_segments(spec.space, ob, op, solver).mean_cost
                gv = _aligned_gap(spec, ob, op)
                dist = distance(spec.space, b, p)
                records.append({"delta": delta, "distance": dist, "f_n": fv, "mean_gap": gv,
                                "base": b.to_json() if not b.is_symbolic else "word"})
                best_f, best_g = max(best_f, fv), max(best_g, gv)
        rung_mod.append(best_f)
        rung_con.append(best_g)
    modulus, contrast = [], []
    for delta in deltas:
        within = [r for r in records if r["distance"] <= delta]
        modulus.append(max((r["f_n"] for r in within), default=0.0))
        contrast.append(max((r["mean_gap"] for r in within), default=0.0))
    for r in records:
        r.pop("base")
    return EquicontinuityScan(deltas, tuple(modulus), tuple(contrast), tuple(rung_mod),
                              tuple(rung_con), n, tuple(records))


# ---------------------------------------------------------------------------
# measure samplers
# ---------------------------------------------------------------------------

class LebesgueSampler:
    """Uniform measure on the interval / circle, uniform Bernoulli on the shift."""

    def sample(self, spec, rng, horizon):
        return random_point(spec, rng, horizon)

    def describe(self):
        return {"sampler": "lebesgue"}


class AtomicSampler:
    def __init__(self, atoms, weights=None):
        self.atoms = [a if isinstance(a, SpacePoint) else SpacePoint.at(a) for a in atoms]
        w = np.ones(len(self.atoms)) if weights is None else np.asarray(weights, dtype=float)
        self.weights = w / w.sum()

    def sample(self, spec, rng, horizon):
        return self.atoms[int(rng.choice(len(self.atoms), p=self.weights))]

    def describe(self):
        return {"sampler": "atoms", "atoms": [a.to_json() for a in self.atoms],
                "weights": [float(w) for w in self.weights]}


class PointMassSampler(AtomicSampler):
    def __init__(self, point):
        super().__init__([point])

    def describe(self):
        return {"sampler": "point", "point": self.atoms[0].to_json()}


class OrbitTailSampler:
    """Approximates the measure generated by ``point`` by its orbit points T^k x.

    k is drawn uniformly from [burn_in, burn_in + span).  The approximation
    is only as good as the genericity of ``point``.
    """

    def __init__(self, point, burn_in: int = 1000, span: int = 4096):
        self.point = point if isinstance(point, SpacePoint) else SpacePoint.at(point)
        self.burn_in = burn_in
        self.span = span
        self._cache = {}

    def sample(self, spec, rng, horizon):
        k = int(self.burn_in + rng.integers(0, self.span))
        key = (spec, horizon)
        if key not in self._cache:
            self._cache[key] = orbit_segment(spec, self.point, self.burn_in + self.span + horizon)
        orb = self._cache[key]
        if spec.space.kind == "shift":
            return SpacePoint.word(self.point.symbols[k:])
        return orb[k - 1]

    def describe(self):
        return {"sampler": "orbit-tail", "point": self.point.to_json(),
                "burn_in": self.burn_in, "span": self.span,
                "note": "approximates the measure generated by the point"}


SAMPLERS = {"lebesgue": LebesgueSampler}


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasureProbeReport:
    kind: str
    sampler: dict
    items: tuple[dict, ...]
    nf_fraction: float
    abstention_rate: float
    consistent: bool
    clusters: tuple[dict, ...] = ()
    candidates: tuple[dict, ...] = ()
    notes: str = ""

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sampler": self.sampler, "nf_fraction": self.nf_fraction,
                "abstention_rate": self.abstention_rate, "consistent": self.consistent,
                "clusters": list(self.clusters), "candidates": list(self.candidates),
                "items": list(self.items), "notes": self.notes}


class _PairEvaluator:
    """nf_membership with orbit and verdict caches keyed by exact point values."""

    def __init__(self, spec, schedule, tol, solver, limit_tol):
        self.spec, self.schedule, self.tol = spec, schedule, tol
        self.solver, self.limit_tol = solver, limit_tol
        self._orbits = {}
        self._verdicts = {}

    def orbit(self, p):
        k = _point_key(p)
        if k not in self._orbits:
            self._orbits[k] = orbit_segment(self.spec, p, self.schedule[-1])
        return self._orbits[k]

    def __call__(self, x, y) -> Verdict:
        key = (_point_key(x), _point_key(y))
        if key not in self._verdicts:
            seq = f_sequence_segments(self.spec, self.orbit(x), self.orbit(y), self.schedule, self.solver)
            self._verdicts[key] = nf_membership(self.spec, x, y, self.schedule, self.tol, self.solver,
                                                self.limit_tol, seq=seq)
        return self._verdicts[key]


def _pair_item(x, y, v: Verdict) -> dict:
    est = v.detail["estimate"]
    return {"x": x.to_json(), "y": y.to_json(), "status": v.status, "margin": v.margin,
            "fbar_hat": est["fbar_hat"], "funder_hat": est["funder_hat"],
            "final_f_n": v.detail["sequence"]["values"][-1]}


def unique_ergodicity_probe(spec: SystemSpec, num_pairs: int = 20, schedule=DEFAULT_SCHEDULE,
                            tol: float = MEMBERSHIP_TOL, seed: int = 0, solver: str = "auto",
                            limit_tol: float = LIMIT_TOL) -> Verdict:
    """Sampled test of F(x, y) = 0 for all pairs.

    Pairs pairing each adversarial point with a random partner come first,
    then random pairs up to ``num_pairs``.  Any ``fails`` pair is a witness
    against unique ergodicity.
    """
    if num_pairs < 1:
        raise ValueError("num_pairs must be >= 1")
    schedule = _check_schedule(schedule)
    rng = _rng(seed)
    H = schedule[-1]
    pairs = [(a, random_point(spec, rng, H)) for a in _adversarial(spec, H)][:num_pairs]
    while len(pairs) < num_pairs:
        pairs.append((random_point(spec, rng, H), random_point(spec, rng, H)))
    ev = _PairEvaluator(spec, schedule, tol, solver, limit_tol)
    items, verdicts = [], []
    for x, y in pairs:
        v = ev(x, y)
        verdicts.append(v)
        items.append(_pair_item(x, y, v))
    detail = {"num_pairs": num_pairs, "schedule": list(schedule), "tol": tol, "pairs": items}
    failing = [i for i, v in enumerate(verdicts) if v.fails]
    if failing:
        w = max(failing, key=lambda i: verdicts[i].margin)
        detail["witness"] = items[w]
        return Verdict(FAILS, verdicts[w].margin, f"pair {w} has F bounded away from 0", detail)
    if all(v.holds for v in verdicts):
        return Verdict(HOLDS, min(v.margin for v in verdicts), "every sampled pair in N(F)", detail)
    undecided = [v for v in verdicts if v.status == INCONCLUSIVE]
    return Verdict(INCONCLUSIVE, max(v.margin for v in undecided),
                   f"{len(undecided)} pairs undecided", detail)


def _sampler_from(obj):
    if obj is None:
        return LebesgueSampler()
    return obj


def ergodicity_probe(spec: SystemSpec, sampler=None, num_pairs: int = 100, schedule=DEFAULT_SCHEDULE,
                     tol: float = MEMBERSHIP_TOL, seed: int = 0, solver: str = "auto",
                     limit_tol: float = LIMIT_TOL) -> MeasureProbeReport:
    """Estimate (mu x mu)(N(F)) from pairs drawn independently from ``sampler``."""
    sampler = _sampler_from(sampler)
    schedule = _check_schedule(schedule)
    rng = _rng(seed)
    H = schedule[-1]
    ev = _PairEvaluator(spec, schedule, tol, solver, limit_tol)
    items = []
    counts = {HOLDS: 0, FAILS: 0, INCONCLUSIVE: 0}
    for _ in range(num_pairs):
        x = sampler.sample(spec, rng, H)
        y = sampler.sample(spec, rng, H)
        v = ev(x, y)
        counts[v.status] += 1
        items.append(_pair_item(x, y, v))
    frac = counts[HOLDS] / num_pairs
    abst = counts[INCONCLUSIVE] / num_pairs
    return MeasureProbeReport("ergodicity", sampler.describe(), tuple(items), frac, abst,
                              frac >= 1 - 2 * abst,
                              notes=f"holds={counts[HOLDS]} fails={counts[FAILS]} "
                                    f"inconclusive={counts[INCONCLUSIVE]}")


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def physical_probe(spec: SystemSpec, sampler=None, num_points: int = 40, schedule=DEFAULT_SCHEDULE,
                   tol: float = MEMBERSHIP_TOL, mass_threshold: float = MASS_THRESHOLD, seed: int = 0,
                   solver: str = "auto", limit_tol: float = LIMIT_TOL,
                   generic_tol: float | None = None) -> MeasureProbeReport:
    """Cluster generic sample points by F-closeness; heavy clusters are basin candidates.

    Clusters are the connected components of the ``holds`` relation
    (single linkage).  Pairs already in one component are not re-evaluated,
    which leaves the components unchanged.
    """
    if num_points < 2:
        raise ValueError("num_points must be >= 2")
    if not (0 < mass_threshold < 1):
        raise ValueError("mass_threshold must lie in (0, 1)")
    sampler = _sampler_from(sampler)
    schedule = _check_schedule(schedule)
    rng = _rng(seed)
    H = schedule[-1]
    points = [sampler.sample(spec, rng, H) for _ in range(num_points)]
    ev = _PairEvaluator(spec, schedule, tol, solver, limit_tol)
    gkw = {} if generic_tol is None else {"tol": generic_tol}
    gen = [generic_probe(spec, p, schedule=schedule, orbit=ev.orbit(p), **gkw) for p in points]
    generic = [i for i, g in enumerate(gen) if g.holds]
    uf = _UnionFind(num_points)
    items = []
    for a, i in enumerate(generic):
        for j in generic[a + 1:]:
            if uf.find(i) == uf.find(j):
                continue
            v = ev(points[i], points[j])
            items.append({"i": i, "j": j, "status": v.status, "margin": v.margin})
            if v.holds:
                uf.union(i, j)
    comps = {}
    for i in generic:
        comps.setdefault(uf.find(i), []).append(i)
    clusters = []
    for root, members in sorted(comps.items(), key=lambda kv: (-len(kv[1]), kv[0])):
        clusters.append({"representative": members[0], "members": members,
                         "mass": len(members) / num_points})
    candidates = []
    battery = default_battery()
    for c in clusters:
        if c["mass"] >= mass_threshold:
            orb = ev.orbit(points[c["representative"]])
            fp = {o.name: time_average_segment(o, orb, (H,)).fstar_hat for o in battery}
            candidates.append({"representative": points[c["representative"]].to_json(),
                               "mass": c["mass"], "fingerprint": fp})
    holds = sum(1 for it in items if it["status"] == HOLDS)
    undecided = sum(1 for it in items if it["status"] == INCONCLUSIVE)
    frac = holds / len(items) if items else 1.0
    abst = undecided / len(items) if items else 0.0
    return MeasureProbeReport(
        "physical", sampler.describe(), tuple(items), frac, abst, bool(candidates),
        tuple(clusters), tuple(candidates),
        notes=(f"{len(generic)}/{num_points} points passed the genericity probe; "
               f"mass threshold {mass_threshold} is a finite-sample stand-in for positive mass"))


# ---------------------------------------------------------------------------
# time-average continuity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeAverageScan:
    observable: str
    deltas: tuple[float, ...]
    modulus: tuple[float, ...]
    rung_modulus: tuple[float, ...]
    flag_tol: float
    witness: dict | None

    @property
    def nonincreasing(self) -> bool:
        return all(b <= a + 1e-15 for a, b in zip(self.modulus, self.modulus[1:]))

    @property
    def discontinuity_flagged(self) -> bool:
        """Modulus still above ``flag_tol`` at the smallest delta."""
        return self.modulus[-1] > self.flag_tol

    def to_dict(self) -> dict:
        return {"observable": self.observable, "deltas": list(self.deltas),
                "modulus": list(self.modulus), "rung_modulus": list(self.rung_modulus),
                "nonincreasing": self.nonincreasing,
                "discontinuity_flagged": self.discontinuity_flagged,
                "flag_tol": self.flag_tol, "witness": self.witness}


def ta_continuity_scan(spec: SystemSpec, observable: Observable, grid_size: int = 8,
                       delta_ladder: Sequence[float] = (0.1, 0.05, 0.01), schedule=DEFAULT_SCHEDULE,
                       seed: int = 0, flag_tol: float = MEMBERSHIP_TOL) -> TimeAverageScan:
    """max |f*(x) - f*(y)| over sampled pairs within each delta.

    A modulus that does not shrink with delta witnesses a discontinuous time
    average, which rules out weak mean equicontinuity.
    """
    if grid_size < 1:
        raise ValueError("grid_size must be >= 1")
    schedule = _check_schedule(schedule)
    H = schedule[-1]
    deltas = tuple(sorted((float(d) for d in delta_ladder), reverse=True))
    rng = _rng(seed)
    grid = _grid(spec, grid_size, rng, H)

    def fstar(p):
        return time_average_segment(observable, orbit_segment(spec, p, H), schedule).fstar_hat

    base_vals = [fstar(b) for b in grid]
    records = []
    rung = []
    for delta in deltas:
        worst = 0.0
        for b, fb in zip(grid, base_vals):
            for p in _partners(spec, b, delta, rng, H):
                diff = abs(fstar(p) - fb)
                records.append({"delta": delta, "distance": distance(spec.space, b, p),
                                "fstar_base": fb, "difference": diff,
                                "base": b.to_json() if not b.is_symbolic else "word"})
                worst = max(worst, diff)
        rung.append(worst)
    modulus = []
    for delta in deltas:
        modulus.append(max((r["difference"] for r in records if r["distance"] <= delta), default=0.0))
    smallest = [r for r in records if r["delta"] == deltas[-1]]
    witness = max(smallest, key=lambda r: r["difference"]) if smallest else None
    return TimeAverageScan(observable.name, deltas, tuple(modulus), tuple(rung), flag_tol, witness)
