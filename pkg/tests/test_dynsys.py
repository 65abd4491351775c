import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orbitdist.dynsys import (CIRCLE, INTERVAL, PrecisionExhausted, SpacePoint, SystemSpec, distance,
                              golden_alpha, make_system, orbit_segment, random_point,
                              required_precision, shift_space, step)

FLOAT_SLACK = 2.0 ** -52  # one rounding to double on top of the fixed-point error
ALL = ["identity", "rotation", "doubling", "quad-circle", "tent", "logistic", "full-shift"]


def spec_of(name):
    return make_system(name, "golden" if name == "rotation" else None)


def close(a, b, space, tol):
    d = abs(a - b)
    if space.kind == "circle":
        d = min(d, 1 - d)
    return d <= tol


# ---- step ----------------------------------------------------------------

def test_step_examples():
    assert step(SystemSpec.rotation(Fraction(1, 4)), SpacePoint.at("0.1")).value == Fraction(7, 20)
    assert step(SystemSpec.quad_circle(), SpacePoint.at(0)).value == Fraction(1, 2)
    assert step(SystemSpec.doubling(), SpacePoint.at("0.3")).value == Fraction(3, 5)


def test_quad_circle_branches_and_tie():
    T = SystemSpec.quad_circle()
    # the tie x = 1/2 takes the second branch: 1/2 - 2 (1/2 - 1)^2 = 0
    assert step(T, SpacePoint.at("1/2")).value == 0
    assert step(T, SpacePoint.at("1/4")).value == Fraction(7, 8)
    assert step(T, SpacePoint.at("3/4")).value == Fraction(3, 8)


def test_step_rejects_bad_input():
    with pytest.raises(TypeError):
        step(SystemSpec.doubling(), SpacePoint.word([0, 1]))
    with pytest.raises(ValueError):
        SystemSpec.logistic(4.5)
    with pytest.raises(ValueError):
        SystemSpec.logistic(0)
    with pytest.raises(ValueError):
        make_system("bakers")


def test_shift_step_drops_first_symbol():
    s = SystemSpec.full_shift()
    assert step(s, SpacePoint.word([1, 0, 1])).symbols == (0, 1)


# ---- orbit_segment ---------------------------------------------------------

def test_orbit_examples():
    seg = orbit_segment(SystemSpec.identity(), SpacePoint.at("0.7"), 3)
    assert list(seg.coords) == [0.7, 0.7, 0.7]
    seg = orbit_segment(SystemSpec.quad_circle(), SpacePoint.at(0), 4)
    assert list(seg.coords) == [0.5, 0.0, 0.5, 0.0]
    seg = orbit_segment(SystemSpec.doubling(), SpacePoint.at("1/3"), 3)
    assert np.allclose(seg.coords, [2 / 3, 1 / 3, 2 / 3], rtol=0, atol=1e-16)
    assert seg.length == 3 and seg.start_index == 1


def test_orbit_rejects_empty_and_exhaustion(monkeypatch):
    with pytest.raises(ValueError):
        orbit_segment(SystemSpec.identity(), SpacePoint.at(0), 0)
    monkeypatch.setenv("ORBITDIST_PRECISION_BITS", "256")
    with pytest.raises(PrecisionExhausted):
        orbit_segment(SystemSpec.doubling(), SpacePoint.at("1/3"), 1024)
    with pytest.raises(PrecisionExhausted):
        orbit_segment(SystemSpec.full_shift(), SpacePoint.word([0] * 70), 32)


def test_error_bound_under_default_policy():
    for name in ALL:
        spec = spec_of(name)
        seg = orbit_segment(spec, random_point(spec, np.random.default_rng(1), 600), 512)
        assert seg.error_bound <= spec.diameter * 2.0 ** -64
        if name == "full-shift":
            assert seg.error_bound == 0


@pytest.mark.parametrize("name", [n for n in ALL if n != "full-shift"])
def test_orbit_matches_exact_steps(name):
    spec = spec_of(name)
    x = SpacePoint.at(Fraction(2, 7)) if name != "identity" else SpacePoint.at("0.3")
    n = 12
    seg = orbit_segment(spec, x, n)
    p = x
    for j in range(n):
        p = step(spec, p)
        assert close(seg.coords[j], float(p.value), spec.space, seg.error_bound + FLOAT_SLACK)


@settings(max_examples=30, deadline=None)
@given(num=st.integers(0, 10 ** 6), den=st.integers(1, 10 ** 6), n=st.integers(1, 256))
def test_doubling_rational_oracle(num, den, n):
    """Fixed-point orbits agree with exact rational iteration."""
    spec = SystemSpec.doubling()
    x = Fraction(num % den, den)
    seg = orbit_segment(spec, SpacePoint.at(x), n)
    exact = x
    for j in range(n):
        exact = (2 * exact) % 1
        assert close(seg.coords[j], float(exact), CIRCLE, seg.error_bound + FLOAT_SLACK)


@settings(max_examples=25, deadline=None)
@given(name=st.sampled_from(ALL), n=st.integers(1, 40), r=st.integers(0, 20), seed=st.integers(0, 2 ** 32))
def test_semigroup_window(name, n, r, seed):
    spec = spec_of(name)
    x = random_point(spec, np.random.default_rng(seed), n + r + 2)
    long = orbit_segment(spec, x, n + r, 1)
    short = orbit_segment(spec, x, n, 1 + r)
    tol = long.error_bound + short.error_bound + FLOAT_SLACK
    for a, b in zip(long.coords[r:], short.coords):
        assert close(a, b, spec.space, tol)


def test_segment_views():
    spec = SystemSpec.rotation(Fraction(1, 8))
    seg = orbit_segment(spec, SpacePoint.at(0), 8)
    assert seg[0].value == Fraction(1, 8)
    assert seg.prefix(3).length == 3
    w = seg.window(2, 4)
    assert w.start_index == 3 and list(w.coords) == list(seg.coords[2:6])
    with pytest.raises(ValueError):
        seg.coords[0] = 1.0


# ---- distance ----------------------------------------------------------------

def test_distance_examples():
    assert distance(CIRCLE, SpacePoint.at("0.1"), SpacePoint.at("0.9")) == pytest.approx(0.2, abs=1e-15)
    assert distance(INTERVAL, SpacePoint.at("0.25"), SpacePoint.at("0.75")) == 0.5
    sh = shift_space(2)
    assert distance(sh, SpacePoint.word([0, 1, 1, 1]), SpacePoint.word([0, 1, 0, 1])) == 0.25
    assert distance(sh, SpacePoint.word([1, 1]), SpacePoint.word([0, 1])) == 1.0
    with pytest.raises(TypeError):
        distance(CIRCLE, SpacePoint.at(0), SpacePoint.word([0]))


@pytest.mark.parametrize("space", [INTERVAL, CIRCLE, shift_space(2), shift_space(3)])
def test_metric_axioms_sampled(space):
    rng = np.random.default_rng(7)

    def pt():
        if space.kind == "shift":
            # shared prefixes make small distances common
            base = [0, 1, 0, 0, 1, 1]
            k = int(rng.integers(0, 6))
            return SpacePoint.word(base[:k] + list(rng.integers(0, space.alphabet_size, 20)))
        return SpacePoint.at(Fraction(int(rng.integers(0, 2 ** 40)), 2 ** 40))

    for _ in range(1000):
        p, q, r = pt(), pt(), pt()
        dpq, dqp = distance(space, p, q), distance(space, q, p)
        assert dpq == dqp
        assert 0 <= dpq <= space.diameter
        assert distance(space, p, r) <= dpq + distance(space, q, r) + 1e-15
        assert distance(space, p, p) == 0


# ---- precision policy ----------------------------------------------------------

def test_required_precision_examples():
    assert required_precision(SystemSpec.doubling(), 1024) == 1088
    assert required_precision(make_system("rotation", "golden"), 10 ** 6) == 128
    assert required_precision(SystemSpec.identity(), 17) == 128
    assert required_precision(SystemSpec.logistic(4), 10) == 10 * 2 + 64


def test_golden_alpha_accuracy():
    a = golden_alpha()
    assert abs(float(a) - (math.sqrt(5) - 1) / 2) < 1e-15
    assert abs(a * a + a - 1) < Fraction(1, 2 ** 250)


def test_point_json_round_trip():
    spec = SystemSpec.doubling()
    rng = np.random.default_rng(3)
    for p in [SpacePoint.at("1/3"), random_point(spec, rng, 200), SpacePoint.word([0, 1, 1])]:
        assert SpacePoint.from_json(p.to_json()) == p


def test_random_points_in_range():
    rng = np.random.default_rng(0)
    for name in ALL:
        spec = spec_of(name)
        p = random_point(spec, rng, 100)
        if p.is_symbolic:
            assert len(p.symbols) >= 100 + spec.space.window
        else:
            assert 0 <= p.value < 1
