import math

import numpy as np
import pytest

from sobolev_lab.errors import ConstructionError, DomainError
from sobolev_lab.geometry import Domain, Verdict, auto_grading, convergence_verdict
from sobolev_lab.models import Status
from sobolev_lab.operator import Estimate, MatrixField
from sobolev_lab.testfn import bump, custom, harmonic_polynomial, quadratic_radial, radial_power, signed_power_1d
from sobolev_lab.verifier import (compute_theta, ghc_for, simplification_constants, verify_chain_rule_bound,
                                  verify_identity, verify_inequalities, verify_metafune_spina, verify_opial,
                                  verify_pointwise, verify_sign_simplification, verify_simplified,
                                  verify_tangential_gradient, verify_trace_constancy)
from sobolev_lab.weights import Normalization, NormalizationKind, custom_weight, power_weight, reanchor


@pytest.fixture
def green_report(green):
    u, w, A, domain = green
    return verify_identity(u, w, A, domain, levels=(3, 4, 5), grading=1.0)


@pytest.fixture
def disk_bump(unit_disk):
    return bump(2), power_weight(0.0), MatrixField.identity(2), unit_disk


def test_green_terms(green_report):
    r = green_report
    assert r.term_I2 == pytest.approx(2.0 * math.pi, rel=1e-10)
    assert r.term_JP == pytest.approx(6.0 * math.pi, rel=1e-10)
    assert r.term_Jdiv == pytest.approx(0.0, abs=1e-12)
    assert r.theta == pytest.approx(-4.0 * math.pi, rel=1e-10)
    assert r.abs_PH == pytest.approx(6.0 * math.pi, rel=1e-10)
    assert r.converged and r.verified
    assert r.tolerance == 1e-6
    assert [row.level for row in r.levels] == [3, 4, 5]
    statuses = {h.name: h.status for h in r.hypotheses}
    assert statuses["(u) u(Ω) ⊂ (0, B)"] is Status.VERIFIED
    assert statuses["(A1) uniform ellipticity"] is Status.VERIFIED


def test_singular_tolerance_default(green):
    u, w, A, domain = green
    report = verify_identity(u, w, A, domain, levels=(2, 3, 4), grading=1.0, boundary_exponent=0.0)
    assert report.tolerance == 1e-3


def test_theta_is_invariant_under_renormalization(green):
    u, w, A, domain = green
    shifted = reanchor(w, Normalization(NormalizationKind.ANCHORED, s0=1.0, value=3.0))
    assert compute_theta(u, shifted, A, domain, 4) == pytest.approx(compute_theta(u, w, A, domain, 4), rel=1e-12)


def test_theta_for_linear_function(unit_disk):
    A = MatrixField.identity(2)
    # h = 2, C = 4: H(2 + x1) = 2 x1 and the flux is 2 cos^2
    shifted = compute_theta(harmonic_polynomial(1, shift=2.0), custom_weight("2", offset=4.0), A, unit_disk, 5)
    assert shifted == pytest.approx(2.0 * math.pi, rel=1e-12)
    # the restricted flux only sees {x1 > 0}
    signed = compute_theta(harmonic_polynomial(1), custom_weight("2"), A, unit_disk, 5)
    assert signed == pytest.approx(math.pi, rel=1e-12)


def test_inequalities_on_green(green_report):
    reports = {r.name: r for r in verify_inequalities(green_report)}
    assert set(reports) == {"ineq-divfree", "ineq-general", "theta-trace"}
    # equality case of the divergence-free inequality
    assert reports["ineq-divfree"].margin == pytest.approx(0.0, abs=1e-8)
    assert reports["ineq-divfree"].holds
    assert reports["ineq-general"].rhs == pytest.approx(4.0 * math.pi, rel=1e-10)
    assert reports["theta-trace"].lhs == pytest.approx(4.0 * math.pi, rel=1e-10)
    assert all(r.holds for r in reports.values())


def test_divfree_inequality_not_applicable_with_divergence(green_report):
    reports = {r.name: r for r in verify_inequalities(green_report, d_A=Estimate(0.5, "exact"))}
    assert not reports["ineq-divfree"].applicable
    assert reports["ineq-general"].holds


def test_identity_with_variable_operator(unit_disk):
    u = quadratic_radial(2.0, 1.0)
    A = MatrixField.scalar_profile("2 + x1**2")
    report = verify_identity(u, power_weight(0.0), A, unit_disk, levels=(3, 4, 5), grading=1.0)
    assert report.verified
    assert report.term_Jdiv != pytest.approx(0.0, abs=1e-6)


def test_singular_identity(unit_disk):
    report = verify_identity(radial_power(-1.0), power_weight(-3.5), MatrixField.identity(2), unit_disk,
                             levels=(3, 4, 5, 6), boundary_exponent=-0.5)
    assert report.tolerance == 1e-3
    assert report.converged


def test_grading_beats_uniform_rule_on_singular_identity(unit_disk):
    u, w, A = radial_power(-1.0), power_weight(-3.5), MatrixField.identity(2)
    levels = (4, 5, 6)
    assert auto_grading(-0.5) == 4.0
    graded = verify_identity(u, w, A, unit_disk, levels=levels, boundary_exponent=-0.5)
    uniform = verify_identity(u, w, A, unit_disk, levels=levels, grading=1.0, boundary_exponent=-0.5)
    assert [row.nodes for row in graded.levels] == [row.nodes for row in uniform.levels]
    assert graded.relative_residual < 1e-3
    assert uniform.relative_residual >= 10.0 * graded.relative_residual
    verdict, _ = convergence_verdict([row.terms["I2"] for row in graded.levels], 1e-3)
    assert verdict is Verdict.CONVERGED


def test_signed_power_divergence_is_flagged():
    box = Domain.box((-1.0, -1.0), (1.0, 1.0))
    w = custom_weight("2", offset=2.0, normalization=Normalization(NormalizationKind.ANCHORED, 1.0, 0.0))
    report = verify_identity(signed_power_1d(0.1), w, MatrixField.identity(2), box, levels=(2, 3, 4, 5), grading=1.0)
    assert report.diagnostics["hessian_u_interior"].verdict == "diverged"
    assert not report.verified
    assert any("hypothesis likely violated" in note for note in report.notes)


def test_opial_on_bump(disk_bump):
    u, w, A, domain = disk_bump
    assert ghc_for(u, w, domain) == pytest.approx(2.0, rel=1e-8)
    reports = verify_opial(u, w, A, domain, grading=1.0)
    assert [r.name for r in reports] == ["opial", "opial-dirichlet"]
    for r in reports:
        assert r.applicable and r.holds
        assert r.constants_used["C_P"].value == 1.0


def test_opial_needs_boundary_vanishing(green):
    u, w, A, domain = green
    reports = verify_opial(u, w, A, domain, grading=1.0)
    assert not any(r.applicable for r in reports)


def test_simplification_constants():
    box = Domain.box((0.0, 0.0), (1.0, 1.0))
    gamma, kappa = simplification_constants(MatrixField.scalar_profile("2 + 0.01*x1"), box, 0.5, 2.0)
    assert gamma.value == pytest.approx(0.5, rel=1e-8)
    assert kappa.value == pytest.approx(0.005, rel=1e-8)
    _, steep = simplification_constants(MatrixField.scalar_profile("2 + 10*x1"), box, 0.5, 2.0)
    assert steep.value == pytest.approx(5.0, rel=1e-8)


def test_simplified_inequality_in_kappa_regime():
    box = Domain.box((0.0, 0.0), (1.0, 1.0))
    u = bump(4, center=(0.5, 0.5), radius=0.5)
    A = MatrixField.scalar_profile("2 + 0.01*x1")
    reports = {r.name: r for r in verify_simplified(u, power_weight(0.0), A, box, levels=(4, 5, 6), grading=1.0)}
    assert reports["gh-bound"].holds
    assert reports["simplified"].applicable and reports["simplified"].holds
    assert reports["simplified"].constants_used["kappa"].value == pytest.approx(0.005, rel=1e-6)


def test_large_kappa_is_not_applicable(disk_bump):
    u, w, _, domain = disk_bump
    A = MatrixField.scalar_profile("5 + 3*x1")
    reports = {r.name: r for r in verify_simplified(u, w, A, domain, grading=1.0)}
    assert reports["simplified"].constants_used["kappa"].value >= 1.0
    assert not reports["simplified"].applicable
    assert not reports["simplified"].holds


def test_sign_simplification(disk_bump):
    u, w, A, domain = disk_bump
    report = verify_sign_simplification(u, w, A, domain, grading=1.0)
    assert report.applicable and report.holds
    assert report.constants_used["theta"].value == pytest.approx(0.0, abs=1e-10)

    convex = verify_sign_simplification(u, w, MatrixField.scalar_profile("2 + x1**2"), domain, grading=1.0)
    assert not convex.applicable
    assert any("(A2)" in note for note in convex.notes)


def test_chain_rule_bound(green, disk_bump):
    report = verify_chain_rule_bound(*green, grading=1.0)
    # H~(u) = 1/2 on the boundary: neither simplification applies
    assert not report.applicable
    assert report.lhs == pytest.approx(4.0 * math.pi, rel=1e-10)
    assert report.rhs == pytest.approx(8.0 * math.pi, rel=1e-10)
    signed = verify_chain_rule_bound(*disk_bump, grading=1.0)
    assert signed.applicable and signed.holds
    assert signed.constants_used["implied"].value == 2.0
    assert signed.constants_used["effective"].value <= 2.0 + 1e-8


@pytest.mark.parametrize("p, g", [(2.0, None), (3.0, None), (3.0, "s"), (2.5, "s + s**3")])
def test_metafune_spina(p, g):
    box = Domain.box((-1.0, -1.0), (1.0, 1.0))
    report = verify_metafune_spina(bump(4, radius=0.8), p, box, levels=(4, 5, 6), g=g)
    assert report.converged
    assert report.theta == pytest.approx(0.0, abs=1e-14)


def test_metafune_spina_arguments(unit_disk):
    with pytest.raises(DomainError):
        verify_metafune_spina(bump(2), 1.0, unit_disk)
    with pytest.raises(ConstructionError):
        verify_metafune_spina(bump(2), 2.0, unit_disk, g="1 + s")


@pytest.mark.parametrize("v, applicable", [
    (quadratic_radial(1.0, 1.0), True),
    (custom("(1 - x1**2 - x2**2)*(2 + x1)"), True),
    (harmonic_polynomial(1), False),
], ids=["paraboloid", "tilted", "x1"])
def test_tangential_gradient(unit_disk, v, applicable):
    report = verify_tangential_gradient(v, unit_disk)
    assert report.applicable is applicable
    assert report.holds is applicable


def test_trace_constancy_zero_trace(disk_bump):
    u, w, _, domain = disk_bump
    report = verify_trace_constancy(u, w, domain)
    assert report.holds
    assert report.T == pytest.approx(0.0, abs=1e-2)


def test_trace_constancy_unit_trace(green):
    u, w, _, domain = green
    anchored = reanchor(w, Normalization(NormalizationKind.ANCHORED, s0=1.0, value=0.0))
    report = verify_trace_constancy(u, anchored, domain)
    assert report.holds
    assert report.T == pytest.approx(1.0, abs=1e-2)


def test_trace_constancy_infinite_trace(unit_disk):
    report = verify_trace_constancy(radial_power(-1.0), power_weight(-3.5), unit_disk)
    assert math.isinf(report.T)
    assert report.holds


def test_trace_constancy_needs_vanishing_htilde(green):
    report = verify_trace_constancy(*green[:2], green[3])
    assert not report.applicable
    assert not report.holds


def test_pointwise_identity(green):
    u, w, _, domain = green
    report = verify_pointwise(u, w, MatrixField.scalar_profile("2 + x1"), domain)
    assert report.holds
    assert report.n_points == 100


def test_pointwise_identity_singular_weight(unit_disk):
    report = verify_pointwise(radial_power(-1.0), power_weight(-3.5), MatrixField.identity(2), unit_disk)
    assert report.tolerance == 1e-8
    assert report.n_points == 100
    assert report.holds
    assert np.isfinite(report.max_error)
