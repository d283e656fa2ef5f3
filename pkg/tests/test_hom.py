import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from continuum_trap.cmt import s_matrix
from continuum_trap.hom import (
    PhaseMatchSpec, PlateauError, alpha_norm, coincidence_curve, coincidence_t1_t2,
    dip_visibility, overlap_ratio, r_closed_form, r_of_tau,
)
from continuum_trap.photons import two_photon_joint

SIGMA, D0 = 43.0, -2.0e4
TAU_C = 1e-12
SPEC = PhaseMatchSpec.from_tau_c(TAU_C)
TAU = np.linspace(-8, 8, 1601) * TAU_C
DELTA = np.linspace(-8, 8, 321) * TAU_C


def test_spec_validation():
    with pytest.raises(ValueError):
        PhaseMatchSpec(bandwidth=0.0)
    with pytest.raises(ValueError):
        PhaseMatchSpec(bandwidth=1.0, shape="sinc")
    assert SPEC.tau_c == pytest.approx(TAU_C)


def test_r_quadrature_matches_closed_form():
    r = r_of_tau(SPEC, TAU)
    np.testing.assert_allclose(r * TAU_C, r_closed_form(TAU, SPEC) * TAU_C, atol=1e-9)


def test_r_even_and_peaked():
    r = r_of_tau(SPEC, TAU)
    assert int(np.argmax(r)) == TAU.size // 2
    np.testing.assert_allclose(r, r[::-1], rtol=0, atol=1e-12 * r.max())


def test_r_grid_checks():
    with pytest.raises(ValueError, match="aliasing"):
        r_of_tau(SPEC, np.linspace(-8, 8, 4) * TAU_C)
    with pytest.raises(ValueError, match="6 tau_c"):
        r_of_tau(SPEC, np.linspace(-3, 3, 601) * TAU_C)


def test_alpha_is_r_squared_integral():
    from scipy.integrate import trapezoid
    assert alpha_norm(SPEC) == pytest.approx(trapezoid(r_closed_form(TAU, SPEC) ** 2, TAU), rel=1e-10)


def test_t1t2_zero_when_slab_empty():
    s = s_matrix(0.0, SIGMA, D0)
    assert np.all(coincidence_t1_t2(TAU, 0.7 * TAU_C, s, SPEC) == 0)


def test_t1t2_dip_limit():
    s = s_matrix(0.5, SIGMA, D0)                       # z >> l_d
    peak = np.max(r_closed_form(TAU, SPEC)) ** 2
    assert np.max(coincidence_t1_t2(TAU, 0.0, s, SPEC)) < 1e-12 * peak
    # general z: |r|^2 |s11 s23 + s13 s21|^2
    s = s_matrix(0.01, SIGMA, D0)
    ref = r_closed_form(TAU, SPEC) ** 2 * abs(s.s11 * s.s23 + s.s13 * s.s21) ** 2
    np.testing.assert_allclose(coincidence_t1_t2(TAU, 0.0, s, SPEC), ref, rtol=1e-12)


def test_t1t2_separated_humps():
    s = s_matrix(0.01, SIGMA, D0)
    d = 10 * TAU_C
    tau = np.linspace(-20, 20, 4001) * TAU_C
    p = coincidence_t1_t2(tau, d, s, SPEC)
    i_max = np.argsort(p)[-1]
    assert abs(abs(tau[i_max]) - d) < 0.02 * TAU_C
    assert p[tau.size // 2] < 1e-10 * p.max()
    left = r_closed_form(tau + d, SPEC) ** 2 * abs(s.s11 * s.s23) ** 2
    right = r_closed_form(tau - d, SPEC) ** 2 * abs(s.s13 * s.s21) ** 2
    np.testing.assert_allclose(p, left + right, rtol=0, atol=1e-9 * p.max())


def test_overlap_ratio_paths_agree():
    d = np.linspace(-4, 4, 33) * TAU_C
    np.testing.assert_allclose(overlap_ratio(d, SPEC, "quadrature"), overlap_ratio(d, SPEC), atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(a=st.floats(0, 6), b=st.floats(0, 6))
def test_overlap_ratio_monotone(a, b):
    ra, rb = overlap_ratio(np.array([a, b]) * TAU_C, SPEC)
    assert 0 <= ra <= 1 and 0 <= rb <= 1
    if a < b:
        assert ra >= rb
    assert overlap_ratio(np.array([0.0]), SPEC)[0] == 1.0


def test_curve_plateau_value():
    s = s_matrix(0.01, SIGMA, D0)
    c = coincidence_curve(np.linspace(-30, 30, 61) * TAU_C, s, SPEC)
    k11, k12 = abs(s.s11) ** 2, abs(s.s12) ** 2
    assert c.values[0] == pytest.approx(c.alpha * (1 - k11 - k12) * (k11 + k12), rel=1e-12)


def test_curve_at_zero_delay():
    for z in (0.002, 0.01, 0.03, 0.069):
        s = s_matrix(z, SIGMA, D0)
        c = coincidence_curve(DELTA, s, SPEC)
        k = abs(s.s11) ** 2 + abs(s.s12) ** 2
        p0 = c.values[DELTA.size // 2]
        assert p0 == pytest.approx(c.alpha * (1 - k) * math.exp(-4 * SIGMA * z), rel=1e-9)


def test_curve_even_and_nonnegative():
    c = coincidence_curve(DELTA, s_matrix(0.02, SIGMA, D0), SPEC)
    assert np.all(c.values >= 0)
    np.testing.assert_allclose(c.values, c.values[::-1], rtol=1e-12)
    np.testing.assert_allclose(c.normalized, c.values / c.alpha)


def test_curve_paths_agree():
    s = s_matrix(0.013, SIGMA, D0)
    a = coincidence_curve(DELTA[::8], s, SPEC)
    q = coincidence_curve(DELTA[::8], s, SPEC, method="quadrature")
    np.testing.assert_allclose(q.values, a.values, rtol=1e-8, atol=1e-12 * a.alpha)


def test_curve_requires_symmetric_grid():
    with pytest.raises(ValueError):
        coincidence_curve(np.linspace(0, 5, 6) * TAU_C, s_matrix(0.01, SIGMA, D0), SPEC)


def test_dip_vanishes_far_down_the_guide():
    c = coincidence_curve(DELTA, s_matrix(3 / SIGMA, SIGMA, D0), SPEC)
    assert dip_visibility(c) > 0.98
    c = coincidence_curve(DELTA, s_matrix(10 / SIGMA, SIGMA, D0), SPEC)
    assert dip_visibility(c) == pytest.approx(1.0, abs=1e-9)


def test_visibility_at_half_point():
    """e^{-4 sigma z} = 1/2: |s11|^2 + |s12|^2 = (1 + 1/2)/2, so V = 1 - (1/2)/(3/4) = 1/3."""
    z = math.log(2) / (4 * SIGMA)
    s = s_matrix(z, SIGMA, D0)
    oracle = 1 - math.exp(-4 * SIGMA * z) / (abs(s.s11) ** 2 + abs(s.s12) ** 2)
    assert oracle == pytest.approx(1 / 3, abs=1e-14)
    for method in ("analytic", "quadrature"):
        c = coincidence_curve(np.linspace(-8, 8, 33) * TAU_C, s, SPEC, method=method)
        assert dip_visibility(c) == pytest.approx(oracle, abs=1e-6)


def test_visibility_errors():
    c = coincidence_curve(DELTA, s_matrix(0.0, SIGMA, D0), SPEC)
    with pytest.raises(PlateauError):
        dip_visibility(c)
    c = coincidence_curve(np.linspace(-2, 2, 9) * TAU_C, s_matrix(0.01, SIGMA, D0), SPEC)
    with pytest.raises(PlateauError, match="plateau"):
        dip_visibility(c)


@settings(max_examples=40, deadline=None)
@given(z=st.floats(1e-4, 0.2))
def test_dip_proportional_to_single_photon_coincidence(z):
    """Zero-delay coincidence tracks the monochromatic P(1,0,1) and the slab-occupation factor."""
    s = s_matrix(z, SIGMA, D0)
    c = coincidence_curve(np.array([-6 * TAU_C, 0.0, 6 * TAU_C]), s, SPEC)
    p101 = two_photon_joint(s)[(1, 0, 1)]
    # P(1,0,1) = e (1 - e) / 2 and 1 - |s11|^2 - |s12|^2 = (1 - e) / 2.
    # Both sides square an amplitude of size sqrt(e) formed by cancelling O(1)
    # terms, so the attainable relative accuracy is about eps / sqrt(e).
    e = math.exp(-4 * SIGMA * z)
    assert c.normalized[1] == pytest.approx(p101, rel=1e-12 + 1e-15 / math.sqrt(e), abs=1e-300)
