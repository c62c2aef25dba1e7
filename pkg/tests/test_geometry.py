import math

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from sobolev_lab.errors import ConstructionError, DomainError, NonFiniteIntegrand
from sobolev_lab.geometry import (Domain, Verdict, auto_grading, boundary_rule, boundary_trace, convergence_verdict,
                                  empirical_orders, integrate, integrate_values, interior_rule, pairwise_sum,
                                  poincare_constant, shell_average)


@pytest.mark.parametrize("domain", [
    Domain.unit_ball(2),
    Domain.unit_ball(3),
    Domain.ball((0.5, -1.0), 2.0),
    Domain.box((0.0, 0.0), (1.0, 3.0)),
    Domain.box((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0)),
], ids=lambda d: d.describe())
@pytest.mark.parametrize("grading", [1.0, 3.0])
def test_rule_weights_sum_to_measure(domain, grading):
    assert interior_rule(domain, 3, grading).total_weight() == pytest.approx(domain.measure(), rel=1e-12)
    assert boundary_rule(domain, 3).total_weight() == pytest.approx(domain.boundary_measure(), rel=1e-12)


def test_measures():
    assert Domain.unit_ball(2).measure() == pytest.approx(math.pi)
    assert Domain.unit_ball(3).boundary_measure() == pytest.approx(4.0 * math.pi)
    assert Domain.box((0.0, 0.0), (1.0, 3.0)).boundary_measure() == pytest.approx(8.0)


@pytest.mark.parametrize("dimension, expected", [(2, math.pi), (3, 4.0 * math.pi / 3.0), (4, math.pi ** 2 / 2.0)])
def test_sphere_second_moment(dimension, expected):
    rule = boundary_rule(Domain.unit_ball(dimension), 3)
    assert integrate_values(rule.nodes[:, 0] ** 2, rule) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("domain", [Domain.unit_ball(2), Domain.box((-1.0, -1.0), (1.0, 2.0))],
                         ids=lambda d: d.describe())
@seed(19)
@settings(max_examples=30, deadline=None)
@given(a=st.floats(-2.0, 2.0), grading=st.sampled_from([2.0, 3.0, 5.0]))
def test_grading_is_neutral_on_smooth_integrands(domain, a, grading):
    def f(x):
        return np.exp(a * x[:, 0]) * np.cos(x[:, 1]) + x[:, 0] ** 2 * x[:, 1] ** 2

    uniform = integrate(f, interior_rule(domain, 4, 1.0))
    graded = integrate(f, interior_rule(domain, 4, grading))
    assert graded == pytest.approx(uniform, rel=1e-8, abs=1e-8)


def test_boundary_normals_are_outward_unit_vectors():
    for domain in (Domain.unit_ball(2), Domain.box((0.0, 0.0), (2.0, 1.0))):
        rule = boundary_rule(domain, 2)
        np.testing.assert_allclose(np.linalg.norm(rule.normals, axis=1), 1.0)
        outside = rule.nodes + 1e-6 * rule.normals
        assert not np.any(domain.contains(outside, closed=True))


def test_divergence_theorem_on_box():
    # ∫ div F = ∮ F.n for F = (x1^2, x1 x2)
    box = Domain.box((0.0, 0.0), (1.0, 2.0))
    interior = integrate(lambda x: 3.0 * x[:, 0], interior_rule(box, 3))
    rule = boundary_rule(box, 3)
    flux = np.sum(np.stack([rule.nodes[:, 0] ** 2, rule.nodes[:, 0] * rule.nodes[:, 1]], axis=1) * rule.normals, axis=1)
    assert integrate_values(flux, rule) == pytest.approx(interior, rel=1e-12)


def test_invalid_domains_and_levels():
    with pytest.raises(ConstructionError):
        Domain.box((0.0, 1.0), (1.0, 0.0))
    with pytest.raises(ConstructionError):
        Domain.ball((0.0,), 1.0)
    with pytest.raises(DomainError):
        interior_rule(Domain.unit_ball(2), 0)


def test_pairwise_sum_is_independent_of_chunking():
    rng = np.random.default_rng(5)
    values = rng.standard_normal(10_001)
    assert pairwise_sum(values) == pytest.approx(float(np.sum(values)), rel=1e-12)
    rule = interior_rule(Domain.unit_ball(2), 5)
    f = lambda x: np.exp(x[:, 0]) * np.cos(3.0 * x[:, 1])
    serial = integrate(f, rule, workers=1, chunk_size=256)
    threaded = integrate(f, rule, workers=4, chunk_size=256)
    assert serial == threaded


def test_non_finite_integrand_names_node():
    rule = interior_rule(Domain.unit_ball(2), 1)
    values = np.ones(rule.size)
    values[3] = np.nan
    with pytest.raises(NonFiniteIntegrand) as err:
        integrate_values(values, rule, "I2")
    assert err.value.node == pytest.approx(rule.nodes[3].tolist())


def test_boundary_trace_takes_inward_limit():
    rule = boundary_rule(Domain.unit_ball(2), 1)

    def f(x, n):
        r = np.linalg.norm(x, axis=1)
        with np.errstate(all="ignore"):
            return np.where(r < 1.0, np.sin(1.0 - r) / (1.0 - r), np.nan)

    np.testing.assert_allclose(boundary_trace(f, rule), 1.0, rtol=1e-6)


@pytest.mark.parametrize("exponent, expected", [(None, 3.0), (0.0, 2.0), (-0.5, 4.0), (-0.95, 8.0), (1.0, 1.0)])
def test_auto_grading(exponent, expected):
    assert auto_grading(exponent) == expected


def test_poincare_constant():
    assert poincare_constant(Domain.unit_ball(2)) == 1.0
    assert poincare_constant(Domain.box((0.0, 0.0), (1.0, 3.0))) == 0.5


def test_shell_average():
    disk = Domain.unit_ball(2)
    averages = shell_average(lambda x: x[:, 0], disk, (0.3, 0.1), [0.2, 0.1, 0.05])
    np.testing.assert_allclose(averages, 0.3, rtol=1e-12)
    # at a boundary point the shells are cut in half
    edge = shell_average(lambda x: np.ones(len(x)), disk, (1.0, 0.0), [0.1, 0.05])
    np.testing.assert_allclose(edge, 1.0)
    with pytest.raises(DomainError):
        shell_average(lambda x: x[:, 0], disk, (0.0, 0.0), [0.1, 0.2])


def test_convergence_verdicts():
    assert convergence_verdict([1.0, 1.0 + 1e-12, 1.0])[0] is Verdict.CONVERGED
    assert convergence_verdict([1.0, 2.0, 3.0, 4.0])[0] is Verdict.DIVERGED
    assert convergence_verdict([1.0, math.inf])[0] is Verdict.DIVERGED
    assert convergence_verdict([1.0, 1.5, 1.75, 1.875])[0] is Verdict.UNDECIDED
    assert convergence_verdict([1.0])[0] is Verdict.UNDECIDED


def test_empirical_orders():
    orders = empirical_orders([1.0, 1.5, 1.75, 1.875])
    assert math.isnan(orders[0])
    assert orders[1:] == pytest.approx([1.0, 1.0])
