import math

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from sobolev_lab.douglas import (BoundaryData, Diagonal, dirichlet_energy, douglas_energy, douglas_fourier,
                                 douglas_study, feller_form, fourier_coefficients, poisson_extend, rotation_defect,
                                 signed_power, theta_representation_check)
from sobolev_lab.errors import ConstructionError, DomainError
from sobolev_lab.testfn import harmonic_polynomial, quadratic_radial

COS = BoundaryData.trig_polynomial([(1, 1.0, 0.0)])


@pytest.mark.parametrize("k", [1, 2, 5])
def test_douglas_energy_of_single_mode(k):
    g = BoundaryData.trig_polynomial([(k, 1.0, 0.0)])
    assert douglas_energy(g, 7) == pytest.approx(k * math.pi, rel=1e-10)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_dirichlet_energy_of_single_mode(k):
    g = BoundaryData.trig_polynomial([(k, 1.0, 0.0)])
    assert dirichlet_energy(g) == pytest.approx(k * math.pi, rel=1e-6)


@seed(29)
@settings(max_examples=30, deadline=None)
@given(coeffs=st.lists(st.tuples(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0)), min_size=3, max_size=3))
def test_mode_energies_add_up(coeffs):
    modes = [(k, a, b) for k, (a, b) in enumerate(coeffs, start=1)]
    expected = math.pi * sum(k * (a * a + b * b) for k, a, b in modes)
    g = BoundaryData.trig_polynomial(modes)
    singles = sum(douglas_energy(BoundaryData.trig_polynomial([mode]), 6) for mode in modes)
    assert singles == pytest.approx(expected, rel=1e-9, abs=1e-12)
    assert douglas_energy(g, 6) == pytest.approx(expected, rel=1e-9, abs=1e-12)
    assert dirichlet_energy(g) == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_fourier_form():
    g = BoundaryData.trig_polynomial([(2, 1.0, 0.0), (3, 0.0, 0.5)], a0=4.0)
    assert douglas_fourier(g) == pytest.approx(2.75 * math.pi, rel=1e-14)
    assert douglas_energy(g, 7) == pytest.approx(2.75 * math.pi, rel=1e-10)


def test_closed_form_data_matches_fft_coefficients():
    g = BoundaryData.closed_form("exp(cos(theta))")
    a0, modes = fourier_coefficients(g)
    assert a0 == pytest.approx(1.2660658777520082, rel=1e-12)  # I_0(1)
    assert douglas_energy(g, 7) == pytest.approx(douglas_fourier(g), rel=1e-9)


def test_dirichlet_energy_equals_douglas_energy():
    g = BoundaryData.trig_polynomial([(1, 1.0, 0.5), (2, -0.3, 0.0)])
    assert dirichlet_energy(g) == pytest.approx(douglas_fourier(g), rel=1e-10)


def test_feller_form_is_twice_douglas_for_p2():
    g = BoundaryData.closed_form("exp(cos(theta)) + sin(2*theta)")
    assert feller_form(g, 2.0, 7) == pytest.approx(2.0 * douglas_energy(g, 7), rel=1e-12)


def test_feller_form_converges_for_p3():
    g = BoundaryData.trig_polynomial([(1, 1.0, 0.0)], a0=2.0)
    coarse, fine = feller_form(g, 3.0, 6), feller_form(g, 3.0, 8)
    assert coarse == pytest.approx(fine, rel=1e-9)
    with pytest.raises(DomainError):
        feller_form(g, 1.5, 6)


def test_diagonal_exclusion_converges_slower():
    extend = douglas_energy(COS, 8, Diagonal.EXTEND)
    exclude = douglas_energy(COS, 8, Diagonal.EXCLUDE)
    assert abs(extend - math.pi) < abs(exclude - math.pi)
    assert exclude == pytest.approx(math.pi, rel=5e-2)


def test_rotation_invariance():
    g = BoundaryData.trig_polynomial([(1, 1.0, 0.2), (4, 0.0, 0.3)])
    assert rotation_defect(g, 0.7, 7) <= 1e-12 * douglas_fourier(g)
    closed = BoundaryData.closed_form("exp(sin(theta))")
    assert rotation_defect(closed, 1.3, 7) <= 1e-10 * douglas_fourier(closed)


def test_poisson_extension():
    assert poisson_extend(COS, np.array([0.3, 0.4])) == pytest.approx(0.3)
    values = poisson_extend(BoundaryData.trig_polynomial([(2, 1.0, 0.0)]), np.array([[0.5, 0.0], [0.0, 0.5]]))
    np.testing.assert_allclose(values, [0.25, -0.25])
    with pytest.raises(DomainError):
        poisson_extend(COS, np.array([1.0, 0.0]))


def test_mode_index_validation():
    with pytest.raises(ConstructionError):
        BoundaryData.trig_polynomial([(0, 1.0)])


def test_signed_power():
    np.testing.assert_allclose(signed_power(np.array([-4.0, 0.0, 9.0]), 0.5), [-2.0, 0.0, 3.0])


def test_douglas_study():
    report = douglas_study(COS, levels=(4, 5, 6, 7))
    assert report.converged and report.holds
    assert report.fourier == pytest.approx(math.pi)
    assert report.dirichlet == pytest.approx(math.pi, rel=1e-10)


@pytest.mark.parametrize("u", [harmonic_polynomial(1), harmonic_polynomial(1, shift=2.0)], ids=["x1", "2+x1"])
def test_theta_representation_for_harmonic_functions(u):
    report = theta_representation_check(u, 2.0)
    assert report.harmonic
    assert report.holds and not report.finding
    assert report.theta_direct == pytest.approx(2.0 * math.pi, rel=1e-10)
    assert report.laplacian_term == pytest.approx(0.0, abs=1e-12)


def test_theta_representation_finding_for_non_harmonic_function():
    report = theta_representation_check(quadratic_radial(2.0, 1.0), 2.0)
    assert not report.harmonic
    assert report.theta_direct == pytest.approx(-8.0 * math.pi, rel=1e-10)
    assert report.representation == pytest.approx(-4.0 * math.pi, rel=1e-6)
    assert report.finding and not report.applicable
