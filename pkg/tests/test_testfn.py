import math

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from sobolev_lab.errors import ConstructionError, SingularPointError, StencilError
from sobolev_lab.geometry import Domain
from sobolev_lab.testfn import (TestFamily, bump, constant, custom, fd_jet, harmonic_polynomial, harmonic_series,
                                quadratic_radial, radial_power, restricted_indicator, signed_power_1d, value_range)
from sobolev_lab.weights import power_weight

JET_FAMILIES = [
    quadratic_radial(2.0, 1.0),
    bump(2),
    bump(4, center=(0.1, 0.0), radius=0.9),
    harmonic_polynomial(3, 1),
    radial_power(0.5),
    custom("exp(x1)*sin(x2)"),
]


@pytest.mark.parametrize("u", JET_FAMILIES, ids=lambda u: u.describe())
@seed(13)
@settings(max_examples=100, deadline=None)
@given(r=st.floats(0.1, 0.7), angle=st.floats(0.0, 2.0 * math.pi))
def test_jet_matches_finite_differences(u, r, angle):
    # annulus keeps every stencil off the origin and the unit circle
    x = np.array([r * math.cos(angle), r * math.sin(angle)])
    _, grad, hess = u.eval_jet(x)
    fd_grad, fd_hess = fd_jet(u, x, step=1e-3)
    np.testing.assert_allclose(grad, fd_grad, rtol=1e-7, atol=1e-8)
    np.testing.assert_allclose(hess, fd_hess, rtol=1e-5, atol=1e-6)


def test_signed_power_jet_away_from_the_kink():
    u = signed_power_1d(0.1)
    x = np.array([0.4, 0.3])
    value, grad, hess = u.eval_jet(x)
    assert value == pytest.approx(0.4 ** 0.6 + 1.0)
    fd_grad, fd_hess = fd_jet(u, x, step=1e-3)
    np.testing.assert_allclose(grad, fd_grad, rtol=1e-7, atol=1e-10)
    np.testing.assert_allclose(hess, fd_hess, rtol=1e-5, atol=1e-8)
    with pytest.raises(SingularPointError):
        u.eval_jet((0.0, 0.5))


def test_radial_power_is_singular_at_origin():
    with pytest.raises(SingularPointError):
        radial_power(-1.0).eval_jet((0.0, 0.0))


def test_bump_vanishes_outside_support():
    u = bump(2, radius=0.5)
    value, grad, hess = u.jet(np.array([[0.6, 0.0], [0.0, -0.9]]))
    assert np.all(value == 0.0)
    assert np.all(grad == 0.0)
    assert np.all(hess == 0.0)
    assert u.value(np.array([[0.0, 0.0]]))[0] == pytest.approx(1.0)


def test_harmonic_families_have_zero_laplacian():
    points = np.array([[0.2, -0.7], [0.5, 0.5]])
    for u in (harmonic_polynomial(4), harmonic_series([(1, 1.0, 0.0), (3, 0.0, 0.5)], a0=2.0)):
        hess = u.hessian(points)
        np.testing.assert_allclose(np.trace(hess, axis1=1, axis2=2), 0.0, atol=1e-12)
    u = harmonic_polynomial(2)
    assert u.value(np.array([[2.0, 1.0]]))[0] == pytest.approx(3.0)


def test_constructor_arguments_are_validated():
    with pytest.raises(ConstructionError):
        bump(0)
    with pytest.raises(ConstructionError):
        bump(2, center=(0.0, 0.0, 0.0))
    with pytest.raises(ConstructionError):
        harmonic_polynomial(2, index=2)


def test_value_range_closed_forms(unit_disk):
    assert value_range(quadratic_radial(2.0, 1.0), unit_disk) == (1.0, 2.0)
    assert value_range(radial_power(-1.0), unit_disk) == (1.0, math.inf)
    assert value_range(radial_power(0.5), unit_disk) == (0.0, 1.0)
    assert value_range(constant(3.0), unit_disk) == (3.0, 3.0)
    box = Domain.box((-1.0, -1.0), (1.0, 1.0))
    lo, hi = value_range(signed_power_1d(0.1), box)
    assert (lo, hi) == pytest.approx((0.0, 2.0))


def test_value_range_sampled(unit_disk):
    lo, hi = value_range(bump(2), unit_disk)
    assert lo == pytest.approx(0.0, abs=1e-10)
    assert hi == pytest.approx(1.0, abs=1e-8)


def test_restricted_indicator():
    u = quadratic_radial(2.0, 1.0)
    w = power_weight(0.0, B=1.5)
    points = np.array([[0.0, 0.0], [0.9, 0.0]])
    np.testing.assert_array_equal(restricted_indicator(u, w, points), [False, True])


def test_stencil_must_stay_inside(unit_disk):
    with pytest.raises(StencilError):
        fd_jet(quadratic_radial(), (0.9999, 0.0), step=1e-3, domain=unit_disk)


def test_family_tags():
    assert bump(2).family is TestFamily.BUMP
    assert constant(1.0).describe() == "constant(c=1.0)"
