import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from sobolev_lab.errors import ConstructionError, DomainError
from sobolev_lab.weights import (Normalization, NormalizationKind, WeightFamily, custom_weight, exponential_weight,
                                 ghc_constant, power_log_weight, power_weight, reanchor, weight_from_tau)


def test_constant_weight_triple():
    w = power_weight(0.0)
    assert w.eval_triple(2.0) == pytest.approx((1.0, 2.0, 2.0), rel=1e-12)
    assert w.normalization.kind is NormalizationKind.HARDY_AT_0


def test_singular_weight_uses_conjugate_hardy():
    w = power_weight(-3.5)
    h, H, Ht = w.eval_triple(1.0)
    assert h == pytest.approx(1.0)
    assert H == pytest.approx(-1.0 / 2.5)
    assert Ht == pytest.approx(1.0 / 3.75, rel=1e-10)
    assert w.normalization.kind is NormalizationKind.CONJUGATE_HARDY_AT_B


def test_log_weight_keeps_hardy_normalization():
    # H = ln s, H~ = s ln s - s -> 0 at 0
    w = power_weight(-1.0, B=math.inf)
    assert w.normalization.kind is NormalizationKind.HARDY_AT_0
    _, H, Ht = w.eval_triple(1.0)
    assert H == pytest.approx(0.0, abs=1e-14)
    assert Ht == pytest.approx(-1.0, rel=1e-12)


def test_out_of_domain_raises():
    w = power_weight(0.0, B=2.0)
    with pytest.raises(DomainError):
        w.eval_triple(-1.0)
    with pytest.raises(DomainError):
        w.eval_triple(2.0)


def test_transforms_of_power_weight():
    w = power_weight(1.0)
    s = np.array([0.5, 1.0, 3.0])
    np.testing.assert_allclose(w.transform_T(s), s / 2.0, rtol=1e-12)
    np.testing.assert_allclose(w.transform_G(s), s ** 3 / 4.0, rtol=1e-12)


@seed(7)
@settings(max_examples=40, deadline=None)
@given(s=st.floats(min_value=0.05, max_value=20.0))
def test_log_derivative_form_of_T(s):
    w = power_log_weight(2.5, 1.0)
    assert w.transform_T_logderivative(s) == pytest.approx(w.transform_T(s), rel=1e-5)


FAMILIES = {
    "power": lambda: power_weight(0.5),
    "power-log": lambda: power_log_weight(2.5, 1.0),
    "exponential": lambda: exponential_weight(0.5, 1.5),
    "tau-generated": lambda: weight_from_tau("1 + s"),
    "custom": lambda: custom_weight("exp(sin(s))", B=3.0),
}


@lru_cache(maxsize=None)
def _family(name):
    return FAMILIES[name]()


@lru_cache(maxsize=None)
def _reanchored(name):
    return reanchor(_family(name), Normalization(NormalizationKind.ANCHORED, s0=0.5, value=1.0))


@pytest.mark.parametrize("name", sorted(FAMILIES))
@seed(11)
@settings(max_examples=25, deadline=None)
@given(s=st.floats(min_value=0.2, max_value=2.5))
def test_triple_is_a_chain_of_antiderivatives(name, s):
    w = _family(name)
    step = 5e-4
    h, H, _ = w.eval_triple(s)
    _, H_plus, Ht_plus = w.eval_triple(s + step)
    _, H_minus, Ht_minus = w.eval_triple(s - step)
    assert h > 0.0
    assert (H_plus - H_minus) / (2 * step) == pytest.approx(h, rel=1e-5, abs=1e-6)
    assert (Ht_plus - Ht_minus) / (2 * step) == pytest.approx(H, rel=1e-5, abs=1e-6)
    assert w.transform_T(s) == pytest.approx(H / h, rel=1e-12)
    assert w.transform_G(s) == pytest.approx(w.transform_T(s) ** 2 * h, rel=1e-12)


@pytest.mark.parametrize("name", sorted(FAMILIES))
@seed(17)
@settings(max_examples=25, deadline=None)
@given(s=st.floats(min_value=0.2, max_value=2.5), t=st.floats(min_value=0.2, max_value=2.5))
def test_Htilde_differences_do_not_depend_on_normalization(name, s, t):
    w, anchored = _family(name), _reanchored(name)
    assert anchored.eval_triple(0.5)[2] == pytest.approx(1.0, rel=1e-12)
    before = w.eval_triple(s)[2] - w.eval_triple(t)[2]
    after = anchored.eval_triple(s)[2] - anchored.eval_triple(t)[2]
    assert after == pytest.approx(before, rel=1e-12, abs=1e-12 * max(1.0, abs(w.eval_triple(s)[2])))


def test_offset_shifts_H_only_by_constant():
    base = power_weight(0.5)
    shifted = power_weight(0.5, offset=0.3)
    s = np.array([0.2, 1.0, 4.0])
    np.testing.assert_allclose(shifted.eval_triple(s)[1], base.eval_triple(s)[1] - 0.3, rtol=1e-12)
    np.testing.assert_allclose(shifted.eval_triple(s)[0], base.eval_triple(s)[0], rtol=1e-12)


def test_extension_interval():
    w = power_weight(0.0)
    interval = w.extension_interval()
    assert interval.left_closed and not interval.right_closed
    assert str(interval) == "[0, inf)"
    assert w.Htilde_on_I(np.array([0.0]))[0] == pytest.approx(0.0)

    singular = power_weight(-3.5)
    assert not singular.extension_interval().left_closed
    assert np.isnan(singular.Htilde_on_I(np.array([0.0]))[0])


def test_normalization_changes_Htilde_by_a_constant():
    w = power_weight(0.0)
    anchored = reanchor(w, Normalization(NormalizationKind.ANCHORED, s0=1.0, value=3.0))
    s = np.array([0.5, 2.0, 7.0])
    diff = anchored.eval_triple(s)[2] - w.eval_triple(s)[2]
    np.testing.assert_allclose(diff, np.full(3, 2.5), rtol=1e-12)
    np.testing.assert_allclose(anchored.eval_triple(s)[1], w.eval_triple(s)[1])


def test_hardy_unavailable_for_nonintegrable_H():
    with pytest.raises(ConstructionError):
        power_weight(-3.5, normalization=Normalization(NormalizationKind.HARDY_AT_0))


def test_custom_weight_closed_form():
    w = custom_weight("2", offset=2.0, normalization=Normalization(NormalizationKind.ANCHORED, 1.0, 0.0))
    assert w.family is WeightFamily.CUSTOM
    assert w.eval_triple(3.0) == pytest.approx((2.0, 4.0, 4.0), rel=1e-12)


def test_custom_weight_numeric_antiderivatives():
    w = custom_weight("exp(sin(s))", B=3.0)
    s = 1.3
    step = 1e-4
    h, H, _ = w.eval_triple(s)
    _, H_plus, Ht_plus = w.eval_triple(s + step)
    _, H_minus, Ht_minus = w.eval_triple(s - step)
    assert (H_plus - H_minus) / (2 * step) == pytest.approx(h, rel=1e-5)
    assert (Ht_plus - Ht_minus) / (2 * step) == pytest.approx(H, rel=1e-5)


def test_weight_from_tau_recovers_constant_weight():
    w = weight_from_tau("s")
    h, H, _ = w.eval_triple(2.0)
    assert h == pytest.approx(1.0, rel=1e-8)
    assert H == pytest.approx(2.0, rel=1e-8)
    assert w.transform_T(3.0) == pytest.approx(3.0, rel=1e-8)


def test_weight_from_tau_rejects_nonpositive_tau():
    with pytest.raises(ConstructionError):
        weight_from_tau("1 - s", B=math.inf)


def test_ghc_constant_power_weights():
    assert ghc_constant(power_weight(0.0), (1e-3, 10.0)) == pytest.approx(2.0, rel=1e-10)
    # (alpha + 2) / (alpha + 1)
    assert ghc_constant(power_weight(1.0), (1e-3, 10.0)) == pytest.approx(1.5, rel=1e-10)


def test_ghc_constant_unbounded_at_sign_change():
    w = power_weight(0.0, normalization=Normalization(NormalizationKind.ANCHORED, s0=1.0, value=0.0))
    # H~ = (s^2 - 1)/2 changes sign at 1 where G_H = 1
    assert ghc_constant(w, (0.1, 10.0)) is None
