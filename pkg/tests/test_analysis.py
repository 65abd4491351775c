import numpy as np
import pytest

from orbitdist.analysis import (AtomicSampler, LebesgueSampler, OrbitTailSampler, PointMassSampler,
                                best_partition_cover, ergodicity_probe, partition_bound,
                                partition_cover, physical_probe, ta_continuity_scan,
                                unique_ergodicity_probe, wme_scan)
from orbitdist.dynsys import SpacePoint, SystemSpec, make_system, orbit_segment, random_point
from orbitdist.estimator import FAILS, HOLDS, arc_coordinate, coordinate, geometric_schedule

ROT = make_system("rotation", "golden")


# ---- partition covers ------------------------------------------------------------

def test_partition_cover_examples():
    ident = SystemSpec.identity()
    o = orbit_segment(ident, SpacePoint.at("0.33"), 50)
    cov = partition_cover(ident, o, o, 0.1)
    assert cov.cells == 10 and cov.covered_mass == 1.0 and np.count_nonzero(cov.a) == 1

    rot10 = SystemSpec.rotation("1/10")
    ox = orbit_segment(rot10, SpacePoint.at("1/20"), 100)  # ten visits per bin
    oy = orbit_segment(ident, SpacePoint.at("0.55"), 100)
    cov = partition_cover(ident, ox, oy, 0.1)
    assert np.allclose(cov.freq_x, 0.1)
    assert cov.a.tolist() == pytest.approx([0, 0, 0, 0, 0, 0.1, 0, 0, 0, 0])

    rng = np.random.default_rng(0)
    a, b = (orbit_segment(ROT, random_point(ROT, rng, 4096), 4096) for _ in range(2))
    assert partition_cover(ROT, a, b, 0.05).covered_mass >= 0.9


def test_partition_cover_invariants_and_errors():
    rng = np.random.default_rng(1)
    dbl = SystemSpec.doubling()
    a, b = (orbit_segment(dbl, random_point(dbl, rng, 500), 500) for _ in range(2))
    for eps in (0.3, 0.1, 0.013):
        cov = partition_cover(dbl, a, b, eps)
        assert 1.0 / cov.cells <= eps
        assert (cov.a >= 0).all() and cov.covered_mass <= 1 + 1e-12
        assert np.all(np.diff(cov.edges) > 0)
    shift = make_system("full-shift")
    w = orbit_segment(shift, random_point(shift, rng, 10), 10)
    with pytest.raises(ValueError):
        partition_cover(shift, w, w, 0.1)
    with pytest.raises(ValueError):
        partition_cover(dbl, a, b, 0)


def test_partition_bound_arithmetic():
    class Cover:
        epsilon, kind = 0.1, "liminf"

        def __init__(self, mass):
            self.covered_mass = mass

    assert partition_bound(Cover(0.9), 1.0) == pytest.approx(0.19)
    assert partition_bound(Cover(1.0), 1.0) == pytest.approx(0.1)
    assert partition_bound(Cover(0.0), 0.5) == 0.5
    with pytest.raises(ValueError):
        partition_bound(Cover(0.5), 1.0, lower=True)


def test_lower_bound_variant_uses_subsequence_cover():
    rng = np.random.default_rng(2)
    a, b = (orbit_segment(ROT, random_point(ROT, rng, 1024), 1024) for _ in range(2))
    cov = best_partition_cover(ROT, a, b, 0.1, geometric_schedule(6, 10))
    assert cov.kind == "subsequence"
    assert partition_bound(cov, 0.5, lower=True) >= 0.1 - 1e-12


# ---- equicontinuity scans ----------------------------------------------------------

def test_wme_scan_identity_modulus_is_delta():
    scan = wme_scan(SystemSpec.identity(), grid_size=4, delta_ladder=(0.1, 0.05, 0.01), n=64)
    assert scan.modulus == pytest.approx((0.1, 0.05, 0.01), rel=1e-9)
    assert scan.rows()[0][0] == 0.1


def test_wme_scan_quad_circle_split():
    scan = wme_scan(SystemSpec.quad_circle(), grid_size=4, delta_ladder=(0.1, 1e-3, 1e-4), n=2048)
    assert max(scan.modulus) <= 0.05
    assert min(scan.contrast_modulus) >= 0.1


def test_wme_scan_doubling_flat():
    scan = wme_scan(SystemSpec.doubling(), grid_size=3, delta_ladder=(0.1, 1e-3), n=1024)
    assert min(scan.modulus) >= 0.2


@pytest.mark.parametrize("family", ["identity", "rotation", "doubling", "quad-circle"])
def test_wme_scan_ordering(family):
    spec = make_system(family, "golden" if family == "rotation" else None)
    scan = wme_scan(spec, grid_size=3, delta_ladder=(0.2, 0.02), n=256, seed=5)
    assert all(b <= a for a, b in zip(scan.modulus, scan.modulus[1:]))
    for m, c in zip(scan.modulus, scan.contrast_modulus):
        assert m <= c + 1e-9


def test_wme_scan_deterministic_and_validated():
    a = wme_scan(SystemSpec.doubling(), 2, (0.1,), 128, seed=3).to_dict()
    b = wme_scan(SystemSpec.doubling(), 2, (0.1,), 128, seed=3).to_dict()
    assert a == b
    with pytest.raises(ValueError):
        wme_scan(SystemSpec.identity(), grid_size=1)
    with pytest.raises(ValueError):
        wme_scan(SystemSpec.quad_circle(), delta_ladder=(0.7,))


# ---- unique ergodicity --------------------------------------------------------------

def test_unique_ergodicity_rotation_holds():
    v = unique_ergodicity_probe(ROT, num_pairs=6)
    assert v.status == HOLDS and v.margin >= 0


def test_unique_ergodicity_identity_fails_with_witness():
    v = unique_ergodicity_probe(SystemSpec.identity(), num_pairs=3, schedule=(16, 32))
    assert v.status == FAILS and v.margin > 0
    w = v.detail["witness"]
    assert abs(float(SpacePoint.from_json(w["x"])) - float(SpacePoint.from_json(w["y"]))) > 0.05


def test_unique_ergodicity_doubling_witness_is_fixed_point():
    v = unique_ergodicity_probe(SystemSpec.doubling(), num_pairs=2)
    assert v.status == FAILS
    assert v.detail["witness"]["x"] == {"value": "0/1"}
    assert v.margin == pytest.approx(0.25 - 0.05, abs=0.03)


def test_unique_ergodicity_rejects_empty():
    with pytest.raises(ValueError):
        unique_ergodicity_probe(ROT, num_pairs=0)


# ---- ergodicity ----------------------------------------------------------------------

def test_two_atom_mixture_fraction():
    sampler = AtomicSampler([SpacePoint.at("0.2"), SpacePoint.at("0.7")])
    r = ergodicity_probe(SystemSpec.identity(), sampler, num_pairs=200, schedule=(16, 32))
    same = [it for it in r.items if it["x"] == it["y"]]
    assert r.nf_fraction == len(same) / 200
    assert abs(r.nf_fraction - 0.5) <= 0.1
    assert not r.consistent


def test_point_mass_fraction_is_one():
    r = ergodicity_probe(ROT, PointMassSampler(SpacePoint.at("0.3")), num_pairs=10)
    assert r.nf_fraction == 1.0 and r.consistent


def test_orbit_tail_sampler_tracks_the_orbit():
    s = OrbitTailSampler(SpacePoint.at(0), burn_in=3, span=4)
    quad = SystemSpec.quad_circle()
    rng = np.random.default_rng(0)
    vals = {float(s.sample(quad, rng, 8)) for _ in range(20)}
    assert vals <= {0.0, 0.5}
    assert "orbit-tail" in s.describe()["sampler"]
    shift = make_system("full-shift")
    w = SpacePoint.word(list(range(2)) * 100)
    t = OrbitTailSampler(w, burn_in=5, span=3)
    p = t.sample(shift, rng, 16)
    assert p.symbols[0] in (0, 1) and len(p.symbols) >= 16


def test_lebesgue_ergodicity_on_doubling():
    r = ergodicity_probe(SystemSpec.doubling(), LebesgueSampler(), num_pairs=6,
                         schedule=geometric_schedule(9, 14))
    assert r.nf_fraction >= 0.8 and r.consistent
    assert "abstention_rate" in r.to_dict()


# ---- physical measures ------------------------------------------------------------------

def test_physical_probe_quad_circle_single_basin():
    r = physical_probe(SystemSpec.quad_circle(), num_points=12, schedule=geometric_schedule(6, 11))
    assert len(r.candidates) == 1 and r.clusters[0]["mass"] >= 0.9
    assert sum(c["mass"] for c in r.clusters) <= 1 + 1e-12
    assert "coordinate" in r.candidates[0]["fingerprint"]


def test_physical_probe_identity_has_no_heavy_cluster():
    r = physical_probe(SystemSpec.identity(), num_points=20, schedule=(16, 32), tol=1e-3,
                       mass_threshold=0.1)
    assert r.candidates == () and not r.consistent


def test_physical_probe_validates():
    with pytest.raises(ValueError):
        physical_probe(ROT, num_points=1)
    with pytest.raises(ValueError):
        physical_probe(ROT, mass_threshold=1.0)


# ---- time-average continuity ----------------------------------------------------------------

def test_ta_scan_identity_modulus_is_delta():
    s = ta_continuity_scan(SystemSpec.identity(), coordinate, grid_size=4, schedule=(8, 16))
    assert s.modulus == pytest.approx((0.1, 0.05, 0.01), rel=1e-9)


def test_ta_scan_doubling_flags_discontinuity():
    s = ta_continuity_scan(SystemSpec.doubling(), coordinate, grid_size=2)
    assert min(s.modulus) >= 0.4 and s.discontinuity_flagged
    assert s.witness is not None


def test_ta_scan_quad_circle_is_continuous():
    for obs in (coordinate, arc_coordinate):
        s = ta_continuity_scan(SystemSpec.quad_circle(), obs, grid_size=3)
        assert s.nonincreasing and not s.discontinuity_flagged
