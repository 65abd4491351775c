from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orbitdist.dynsys import SpacePoint, SystemSpec, make_system, random_point
from orbitdist.estimator import (DEFAULT_SCHEDULE, FAILS, HOLDS, INCONCLUSIVE, FSequence, OBSERVABLES,
                                 arc_coordinate, coordinate, default_battery, f_sequence,
                                 generic_probe, geometric_schedule, limit_estimate, mean_gap,
                                 nf_membership, property_check, shift_invariance_check, time_average)
from orbitdist.matching import f_n

ROT = make_system("rotation", "golden")


def seq_of(values):
    sched = tuple(range(1, len(values) + 1))
    return FSequence(sched, tuple(values), ("exact",) * len(values), (0.0,) * len(values))


def test_schedule_helpers():
    assert DEFAULT_SCHEDULE == (64, 128, 256, 512, 1024, 2048, 4096)
    assert geometric_schedule(2, 4) == (4, 8, 16)
    with pytest.raises(ValueError):
        f_sequence(ROT, SpacePoint.at(0), SpacePoint.at(0), (4, 4))
    with pytest.raises(ValueError):
        f_sequence(ROT, SpacePoint.at(0), SpacePoint.at(0), (0, 4))


# ---- sequences and limits -------------------------------------------------------

def test_f_sequence_examples():
    ident = SystemSpec.identity()
    s = f_sequence(ident, SpacePoint.at("0.1"), SpacePoint.at("0.4"), (8, 16, 32))
    assert s.values == pytest.approx((0.3, 0.3, 0.3))
    s = f_sequence(ROT, SpacePoint.at("0.2"), SpacePoint.at("0.2"), (8, 16))
    assert s.values == (0.0, 0.0)
    s = f_sequence(ROT, SpacePoint.at(0), SpacePoint.at("0.3"), geometric_schedule(8, 12))
    assert s.values[-1] <= 0.01
    assert all(v <= ROT.diameter for v in s.values)
    assert set(s.solvers) == {"cyclic"} and set(s.gap_bounds) == {0.0}


def test_limit_estimate_examples():
    est = limit_estimate(seq_of([0.3] * 6))
    assert (est.fbar_hat, est.funder_hat, est.converged) == (0.3, 0.3, True)
    est = limit_estimate(seq_of([0.9, 0.9, 0.2, 0.4, 0.2, 0.4]))
    assert (est.fbar_hat, est.funder_hat) == (0.4, 0.2)
    assert est.spread == pytest.approx(0.2) and not est.converged
    est = limit_estimate(seq_of([0.5, 0.1, 0.2]), tail_fraction=0.5)
    assert est.tail_start == 2
    with pytest.raises(ValueError):
        limit_estimate(seq_of([0.1]), tail_fraction=0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=20), st.floats(0.01, 1))
def test_limit_estimate_invariants(values, frac):
    est = limit_estimate(seq_of(values), tail_fraction=frac)
    assert est.funder_hat <= est.fbar_hat
    assert est.spread >= 0
    assert est.converged == (est.spread <= est.tolerance)


def test_rotation_limit_converges():
    s = f_sequence(ROT, SpacePoint.at(0), SpacePoint.at("0.3"), geometric_schedule(8, 12))
    est = limit_estimate(s)
    assert est.converged and est.fbar_hat <= 0.01


# ---- membership -------------------------------------------------------------------

def test_nf_membership_examples():
    v = nf_membership(SystemSpec.identity(), SpacePoint.at("0.2"), SpacePoint.at("0.8"), (16, 32))
    assert v.status == FAILS and v.margin == pytest.approx(0.6 - 0.05)
    assert "estimate" in v.to_dict()["detail"]
    quad = SystemSpec.quad_circle()
    rng = np.random.default_rng(0)
    x, y = random_point(quad, rng, 2048), random_point(quad, rng, 2048)
    assert nf_membership(quad, x, y, geometric_schedule(6, 11)).status == HOLDS


@pytest.mark.parametrize("family", ["identity", "rotation", "doubling", "quad-circle", "tent", "full-shift"])
def test_nf_membership_of_diagonal(family):
    spec = make_system(family, "golden" if family == "rotation" else None)
    x = random_point(spec, np.random.default_rng(3), 256)
    v = nf_membership(spec, x, x, (64, 128, 256))
    assert v.status == HOLDS and v.margin == pytest.approx(0.05)


def test_nf_membership_abstains_on_spread():
    spec = SystemSpec.identity()
    seq = seq_of([0.01, 0.04, 0.001, 0.04])
    v = nf_membership(spec, SpacePoint.at(0), SpacePoint.at(0), seq=seq)
    assert v.status == INCONCLUSIVE and v.margin == pytest.approx(0.039)


# ---- observables and time averages ---------------------------------------------------

def test_battery_shape():
    names = [o.name for o in default_battery()]
    assert len(names) == 13 and names[0] == "coordinate"
    assert "arc" in OBSERVABLES
    assert arc_coordinate(np.array([0.0, 0.25, 0.5, 0.999]))[2] == 1.0


def test_time_average_examples():
    r = time_average(SystemSpec.identity(), coordinate, SpacePoint.at("0.3"), (8, 16))
    assert r.fstar_hat == pytest.approx(0.3) and r.oscillation == pytest.approx(0, abs=1e-15)
    r = time_average(ROT, coordinate, SpacePoint.at(0))
    assert r.fstar_hat == pytest.approx(0.5, abs=0.01)
    r = time_average(SystemSpec.quad_circle(), coordinate, SpacePoint.at(0), (2, 4, 64))
    assert r.fstar_hat == 0.25


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31), fam=st.sampled_from(["rotation", "doubling", "logistic"]))
def test_partial_averages_within_range(seed, fam):
    spec = make_system(fam, "golden" if fam == "rotation" else None)
    x = random_point(spec, np.random.default_rng(seed), 512)
    for obs in default_battery():
        r = time_average(spec, obs, x, (16, 64, 512))
        assert all(obs.lo - 1e-12 <= a <= obs.hi + 1e-12 for a in r.partial_averages)
        assert r.oscillation >= 0


def test_generic_probe_examples():
    assert generic_probe(SystemSpec.doubling(), SpacePoint.at(0)).status == HOLDS
    rng = np.random.default_rng(1)
    assert generic_probe(ROT, random_point(ROT, rng, 4096)).status == HOLDS
    word = []
    k = 0
    while len(word) < 4096 + 70:
        word += [0] * (2 ** k) + [1] * (2 ** k)
        k += 1
    v = generic_probe(make_system("full-shift"), SpacePoint.word(word))
    assert v.status == FAILS and v.margin > 0


# ---- finite-n identities ---------------------------------------------------------------

def test_mean_gap_examples():
    quad = SystemSpec.quad_circle()
    assert mean_gap(quad, SpacePoint.at("0.3"), SpacePoint.at("0.3"), 50) == 0
    assert mean_gap(SystemSpec.identity(), SpacePoint.at("0.1"), SpacePoint.at("0.6"), 9) == pytest.approx(0.5)
    x, y = SpacePoint.at(0), SpacePoint.at(Fraction(1, 10 ** 4))
    assert mean_gap(quad, x, y, 2048) >= 0.1
    assert f_n(quad, x, y, 2048) <= 0.05


def test_shift_invariance_examples():
    rng = np.random.default_rng(0)
    x, y = random_point(ROT, rng, 300), random_point(ROT, rng, 300)
    v = shift_invariance_check(ROT, x, y, 0, 0, 64)
    assert v.detail["difference"] == 0
    v = shift_invariance_check(SystemSpec.identity(), SpacePoint.at("0.2"), SpacePoint.at("0.5"), 3, 5, 64)
    assert v.detail["difference"] == 0 and v.status == HOLDS
    v = shift_invariance_check(ROT, x, y, 4, 0, 256)
    assert v.status == HOLDS and v.detail["difference"] <= 4 * 0.5 / 256 + 1e-9
    with pytest.raises(ValueError):
        shift_invariance_check(ROT, x, y, 10, 10, 20)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 31), r=st.integers(0, 8), s=st.integers(0, 8),
       fam=st.sampled_from(["doubling", "quad-circle", "tent", "full-shift"]))
def test_shift_bound_property(seed, r, s, fam):
    spec = make_system(fam)
    rng = np.random.default_rng(seed)
    x, y = random_point(spec, rng, 80), random_point(spec, rng, 80)
    assert shift_invariance_check(spec, x, y, r, s, 64).status == HOLDS


def test_property_check_examples():
    p = SpacePoint.at("0.4")
    rep = property_check(ROT, [p, p, p], 16)
    assert rep.ok and set(rep.values.values()) == {0.0}
    ident = SystemSpec.identity()
    rep = property_check(ident, [SpacePoint.at("0.1"), SpacePoint.at("0.5"), SpacePoint.at("0.9")], 8)
    assert rep.ok and rep.values["xz"] == pytest.approx(0.8)
    rng = np.random.default_rng(4)
    rep = property_check(ROT, [random_point(ROT, rng, 64) for _ in range(3)], 64)
    assert rep.ok and len(rep.values) == 6


def test_property_check_reports_injected_fault():
    from orbitdist.matching import CostMatrix
    rng = np.random.default_rng(4)
    pts = [random_point(ROT, rng, 32) for _ in range(3)]
    rep = property_check(ROT, pts, 32, perturb=lambda C: CostMatrix(C.entries * 1.5))
    assert "symmetry" in rep.violated() and not rep.ok


def test_spread_is_small_for_generic_pairs():
    """Soft check: pairs of generic points have converging F_n."""
    rng = np.random.default_rng(8)
    misses = 0
    for _ in range(5):
        x, y = random_point(ROT, rng, 4096), random_point(ROT, rng, 4096)
        if generic_probe(ROT, x).holds and generic_probe(ROT, y).holds:
            est = limit_estimate(f_sequence(ROT, x, y))
            misses += est.spread > 2 * est.tolerance
    assert misses == 0
