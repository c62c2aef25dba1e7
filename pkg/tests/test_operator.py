from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from sobolev_lab.errors import ConstructionError, EllipticityViolation
from sobolev_lab.geometry import Domain
from sobolev_lab.testfn import custom
from sobolev_lab.operator import (MatrixField, MatrixKind, a_norm, a_norm_squared, apply_P, divergence_data,
                                  ellipticity_constants)


def test_identity_constants_are_exact(unit_disk):
    c_A, C_A = ellipticity_constants(MatrixField.identity(2), unit_disk)
    assert (c_A.value, C_A.value) == (1.0, 1.0)
    assert c_A.provenance == "exact"


def test_constant_matrix_eigenvalues(unit_disk):
    A = MatrixField.constant([[2.0, 1.0], [1.0, 2.0]])
    assert A.kind is MatrixKind.CONSTANT
    c_A, C_A = ellipticity_constants(A, unit_disk)
    assert c_A.value == pytest.approx(1.0, rel=1e-12)
    assert C_A.value == pytest.approx(3.0, rel=1e-12)
    data = divergence_data(A, unit_disk)
    assert data.divA_sup.value == 0.0
    assert data.A2_holds


def test_non_symmetric_matrix_is_rejected():
    with pytest.raises(ConstructionError):
        MatrixField.custom([["1", "x1"], ["0", "1"]])


def test_sign_change_violates_ellipticity():
    A = MatrixField.scalar_profile("x1")
    with pytest.raises(EllipticityViolation):
        ellipticity_constants(A, Domain.box((-1.0, -1.0), (1.0, 1.0)), n_samples=256)


def test_scalar_profile_divergence_constants():
    box = Domain.box((0.0, 0.0), (1.0, 1.0))
    A = MatrixField.scalar_profile("2 + 0.01*x1")
    c_A, C_A = ellipticity_constants(A, box, n_samples=512)
    assert c_A.value == pytest.approx(2.0, abs=1e-9)
    assert C_A.value == pytest.approx(2.01, abs=1e-9)
    data = divergence_data(A, box, n_samples=512, c_A=c_A)
    assert data.divA_sup.value == pytest.approx(0.01, rel=1e-12)
    assert data.divA_sup.provenance == "exact"
    assert data.d_A.value == pytest.approx(1e-4 / 2.0, rel=1e-8)
    np.testing.assert_allclose(data.divA(np.array([[0.3, 0.4]])), [[0.01, 0.0]], atol=1e-15)


def test_second_divergence_sign(unit_disk):
    convex = divergence_data(MatrixField.scalar_profile("2 + x1**2"), unit_disk, n_samples=256)
    assert not convex.A2_holds
    assert convex.div2A(np.array([[0.1, 0.2]]))[0] == pytest.approx(2.0)

    affine = divergence_data(MatrixField.scalar_profile("2 + x1"), unit_disk, n_samples=256)
    assert affine.A2_holds
    assert affine.divA_sup.value == pytest.approx(1.0)


def test_diagonal_affine_entries():
    A = MatrixField.diagonal_affine([2.0, 3.0], [[1.0, 0.0], [0.0, -1.0]])
    values = A.at(np.array([[0.5, 0.25]]))[0]
    np.testing.assert_allclose(values, [[2.5, 0.0], [0.0, 2.75]])
    np.testing.assert_allclose(A.divA_at(np.array([[0.0, 0.0]])), [[1.0, -1.0]])


def test_P_of_green_function(green):
    u, _, A, _ = green
    points = np.array([[0.1, 0.2], [-0.5, 0.3]])
    np.testing.assert_allclose(apply_P(A, u, points), [-4.0, -4.0], rtol=1e-12)
    scaled = MatrixField.scalar_profile("2 + x1")
    np.testing.assert_allclose(apply_P(scaled, u, points), -4.0 * (2.0 + points[:, 0]), rtol=1e-12)


@pytest.mark.parametrize("A", [
    MatrixField.identity(2),
    MatrixField.constant([[2.0, 1.0], [1.0, 2.0]]),
    MatrixField.diagonal_affine([2.0, 3.0], [[1.0, 0.0], [0.0, -1.0]]),
    MatrixField.scalar_profile("2 + x1**2"),
    MatrixField.custom([["2 + x1", "x2/4"], ["x2/4", "3"]]),
], ids=lambda A: A.kind.value)
def test_divergence_form_decomposition(A):
    # div(A grad u) - div A . grad u = Pu
    u = custom("exp(x1)*sin(x2) + x1**2*x2")
    points = np.random.default_rng(5).uniform(-0.7, 0.7, size=(100, 2))
    lhs = A.div_A_grad(u.form, points) - np.einsum("mi,mi->m", A.divA_at(points), u.gradient(points))
    np.testing.assert_allclose(lhs, apply_P(A, u, points), rtol=1e-8, atol=1e-8)


@lru_cache(maxsize=1)
def _tilted():
    A = MatrixField.custom([["2 + x1", "x2/4"], ["x2/4", "3"]])
    return (A, *ellipticity_constants(A, Domain.unit_ball(2), n_samples=1024))


@seed(3)
@settings(max_examples=1000, deadline=None)
@given(x=st.tuples(st.floats(-0.7, 0.7), st.floats(-0.7, 0.7)),
       xi=st.tuples(st.floats(-10, 10), st.floats(-10, 10)))
def test_a_norm_between_ellipticity_bounds(x, xi):
    A, c_A, C_A = _tilted()
    q = a_norm_squared(A, np.array([x]), np.array([xi]))[0]
    size = xi[0] ** 2 + xi[1] ** 2
    assert c_A.value * size * (1 - 1e-6) - 1e-12 <= q <= C_A.value * size * (1 + 1e-6) + 1e-12


def test_a_norm_of_identity():
    assert a_norm(MatrixField.identity(2), (0.0, 0.0), (3.0, 4.0)) == pytest.approx(5.0)
