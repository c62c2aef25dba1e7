"""
Principal weights h on (0, B), their antiderivatives H and H~, the transforms
T_H = H/h and G_H = H^2/h, the extension interval I of H~ and the constant of
the condition G_H <= C |H~|.

Closed forms are used for the power, power-log and exponential families; the
tau-generated and custom families integrate numerically (relative tolerance
1e-10).
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Tuple, Union

import numpy as np
import sympy as sp
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from sobolev_lab.errors import ConstructionError, DomainError, EvaluationError
from sobolev_lab.expressions import ClosedForm

logger = logging.getLogger(__name__)

RTOL = 1e-10
UNBOUNDED_CAP = 1e12

ArrayLike = Union[float, np.ndarray]


class WeightFamily(str, Enum):
    POWER = "power"
    POWER_LOG = "power-log"
    EXPONENTIAL = "exponential"
    TAU = "tau-generated"
    CUSTOM = "custom-closed-form"


class NormalizationKind(str, Enum):
    HARDY_AT_0 = "hardy-at-0"
    CONJUGATE_HARDY_AT_B = "conjugate-hardy-at-B"
    ANCHORED = "anchored"


@dataclass(frozen=True)
class Normalization:
    """Which antiderivative of H is meant by H~."""

    kind: NormalizationKind
    s0: float = 1.0
    value: float = 0.0

    def __str__(self) -> str:
        if self.kind is NormalizationKind.ANCHORED:
            return f"anchored(s0={self.s0:g}, value={self.value:g})"
        return self.kind.value


@dataclass(frozen=True)
class Interval:
    """One of (0,B), [0,B), (0,B], [0,B]."""

    B: float
    left_closed: bool
    right_closed: bool
    indeterminate: bool = False

    def __str__(self) -> str:
        right = "inf" if math.isinf(self.B) else f"{self.B:g}"
        text = f"{'[' if self.left_closed else '('}0, {right}{']' if self.right_closed else ')'}"
        return text + (" (indeterminate)" if self.indeterminate else "")

    def contains(self, s: ArrayLike) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        inside = (s > 0.0) & (s < self.B)
        if self.left_closed:
            inside |= s == 0.0
        if self.right_closed:
            inside |= s == self.B
        return inside


# ----------------------
# Numeric endpoint limits
# ----------------------

def numeric_limit(f: Callable[[np.ndarray], np.ndarray], points: np.ndarray) -> float:
    """
    Limit of a function that is monotone near an endpoint, read off the sequence
    f(points[k]) with points approaching the endpoint geometrically.

    Returns the limit, +-inf for divergence or nan when undecided within budget.
    """
    with np.errstate(all="ignore"):
        values = np.asarray(f(points), dtype=float)
    if np.any(np.isinf(values)):
        return float(np.sign(values[np.isinf(values)][-1]) * np.inf)
    values = values[np.isfinite(values)]
    if values.size >= 2 and abs(values[-1]) > UNBOUNDED_CAP and abs(values[-1]) > abs(values[-2]):
        return float(np.sign(values[-1]) * np.inf)
    if values.size < 4:
        return float("nan")
    increments = np.diff(values)
    scale = max(1.0, abs(values[-1]))
    if np.all(np.abs(increments[-2:]) <= RTOL * scale):
        return float(values[-1])
    if abs(values[-1]) > UNBOUNDED_CAP and np.all(np.abs(increments[-3:]) > 0):
        return float(np.sign(values[-1]) * np.inf)
    tail = np.abs(increments[-4:])
    monotone = np.all(np.sign(increments[-4:]) == np.sign(increments[-1]))
    if monotone and np.all(tail[1:] >= 0.9 * tail[:-1]):
        return float(np.sign(increments[-1]) * np.inf)
    # geometric contraction of the increments: Aitken-style tail sum
    ratio = tail[-1] / tail[-2] if tail[-2] > 0 else 0.0
    if monotone and ratio < 0.9:
        return float(values[-1] + increments[-1] * ratio / (1.0 - ratio))
    return float("nan")


def _approach(endpoint: float, s_ref: float, B: float, steps: int = 16) -> np.ndarray:
    k = np.arange(1, steps + 1, dtype=float)
    if endpoint == 0.0:
        return s_ref * 10.0 ** (-k)
    if math.isinf(B):
        return s_ref * 10.0 ** k
    return B - (B - s_ref) * 10.0 ** (-k)


# ----------------------
# Numeric antiderivatives
# ----------------------

class _OdeAntiderivatives:
    """
    Integrates the pair (a, H~) from a reference point with DOP853, where `a` is
    either beta (tau-generated: beta' = 1/tau) or H itself (custom: H' = h).
    """

    def __init__(self, rhs_a: Callable[[float, float], float], H_of: Callable[[np.ndarray, np.ndarray], np.ndarray],
                 s_ref: float, a_ref: float, Ht_ref: float):
        self.rhs_a = rhs_a
        self.H_of = H_of
        self.s_ref = s_ref
        self.a_ref = a_ref
        self.Ht_ref = Ht_ref

    def _rhs(self, s, y):
        return [self.rhs_a(s, y[0]), float(self.H_of(np.asarray(s), np.asarray(y[0])))]

    def evaluate(self, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        s = np.asarray(s, dtype=float)
        flat = s.ravel()
        a = np.full(flat.shape, np.nan)
        Ht = np.full(flat.shape, np.nan)
        at_ref = flat == self.s_ref
        a[at_ref], Ht[at_ref] = self.a_ref, self.Ht_ref
        for side in (flat < self.s_ref, flat > self.s_ref):
            if not np.any(side):
                continue
            targets = np.unique(flat[side])
            end = targets[0] if targets[0] < self.s_ref else targets[-1]
            order = targets[::-1] if end < self.s_ref else targets
            sol = solve_ivp(self._rhs, (self.s_ref, end), [self.a_ref, self.Ht_ref], method="DOP853",
                            t_eval=order, rtol=1e-12, atol=1e-14)
            if sol.status < 0 or sol.y.shape[1] != order.size:
                raise EvaluationError(f"Numeric antiderivative failed towards s={end:g}: {sol.message}")
            lookup_a = dict(zip(order.tolist(), sol.y[0].tolist()))
            lookup_Ht = dict(zip(order.tolist(), sol.y[1].tolist()))
            idx = np.nonzero(side)[0]
            a[idx] = [lookup_a[v] for v in flat[idx].tolist()]
            Ht[idx] = [lookup_Ht[v] for v in flat[idx].tolist()]
        return a.reshape(s.shape), Ht.reshape(s.shape)


# ----------------------
# Weight triple
# ----------------------

@dataclass(frozen=True, eq=False)
class WeightTriple:
    """
    A principal weight h with antiderivatives H (offset C, H = H_0 - C) and H~.

    Instances are immutable; build them with the family constructors below
    (`power_weight`, `power_log_weight`, `exponential_weight`, `weight_from_tau`,
    `custom_weight`).
    """

    family: WeightFamily
    params: dict
    B: float
    H_offset: float
    normalization: Normalization
    _h: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    _H: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    _Ht: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    _limits: Tuple[float, float] = field(repr=False)
    _rebuild: Callable[[Normalization], "WeightTriple"] = field(repr=False)

    def describe(self) -> str:
        args = ", ".join(f"{k}={v}" for k, v in self.params.items())
        B = "inf" if math.isinf(self.B) else f"{self.B:g}"
        return f"{self.family.value}({args}), B={B}, C={self.H_offset:g}, Htilde={self.normalization}"

    # -- evaluation --

    def _check(self, s: ArrayLike) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if not np.all((s > 0.0) & (s < self.B)):
            bad = s[~((s > 0.0) & (s < self.B))].ravel()[0]
            raise DomainError(f"s={bad:g} is outside (0, {self.B:g}) for {self.describe()}")
        return s

    def evaluate(self, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(h, H, H~) at points already known to lie in (0, B); no domain check."""
        s = np.asarray(s, dtype=float)
        with np.errstate(all="ignore"):
            return self._h(s), self._H(s), self._Ht(s)

    def eval_triple(self, s: ArrayLike):
        s = self._check(s)
        h, H, Ht = self.evaluate(s)
        if s.ndim == 0:
            return float(h), float(H), float(Ht)
        return h, H, Ht

    def transform_T(self, s: ArrayLike):
        h, H, _ = self.eval_triple(s)
        return H / h

    def transform_T_logderivative(self, s: ArrayLike, step: float = 1e-6):
        """T_H = 1/(ln|H|)' by central differences; used as an independent check of transform_T."""
        s = self._check(s)
        ds = step * np.maximum(s, 1.0)
        lo, hi = np.maximum(s - ds, s * 0.5), s + ds
        hi = np.where(hi < self.B, hi, s + 0.5 * (self.B - s))
        _, H_lo, _ = self.evaluate(lo)
        _, H_hi, _ = self.evaluate(hi)
        deriv = (np.log(np.abs(H_hi)) - np.log(np.abs(H_lo))) / (hi - lo)
        return 1.0 / deriv

    def transform_G(self, s: ArrayLike):
        h, H, _ = self.eval_triple(s)
        return H * H / h

    # -- endpoints --

    def endpoint_limits(self) -> Tuple[float, float]:
        """(lim_{s->0+} H~, lim_{s->B-} H~), +-inf when infinite, nan when undecided."""
        return self._limits

    def extension_interval(self) -> Interval:
        left, right = self._limits
        indeterminate = math.isnan(left) or math.isnan(right)
        right_closed = (not math.isinf(self.B)) and math.isfinite(right)
        return Interval(self.B, math.isfinite(left), right_closed, indeterminate)

    def Htilde_on_I(self, s: ArrayLike) -> np.ndarray:
        """H~ on I, endpoints included through the continuous extension; nan outside I."""
        s = np.asarray(s, dtype=float)
        out = np.full(s.shape, np.nan)
        inside = (s > 0.0) & (s < self.B)
        if np.any(inside):
            out[inside] = self.evaluate(s[inside])[2]
        interval = self.extension_interval()
        if interval.left_closed:
            out[s == 0.0] = self._limits[0]
        if interval.right_closed:
            out[s == self.B] = self._limits[1]
        return out

    def with_normalization(self, normalization: Normalization) -> "WeightTriple":
        return self._rebuild(normalization)

    # -- condition (G_H) --

    def ghc_constant(self, sample_range: Tuple[float, float], n_samples: int = 2000,
                     cap: float = UNBOUNDED_CAP) -> Optional[float]:
        """
        Empirical sup of G_H/|H~| over log-spaced samples of `sample_range`, or None
        when the ratio is unbounded there.
        """
        lo, hi = float(sample_range[0]), float(sample_range[1])
        lo = max(lo, 1e-300)
        hi = min(hi, self.B if math.isfinite(self.B) else 1e300)
        if not lo < hi:
            raise DomainError(f"Empty sample range ({lo:g}, {hi:g})")
        if hi == self.B:
            hi = lo + (hi - lo) * (1.0 - 1e-12) if lo > 0.5 * hi else hi * (1.0 - 1e-12)
        s = np.geomspace(lo, hi, n_samples)
        h, H, Ht = self.evaluate(s)
        G = H * H / h

        # a zero of H~ where G_H does not vanish makes the ratio blow up
        sign = np.sign(Ht)
        if np.any((Ht == 0.0) & (G > 0.0)):
            logger.debug("▲ H~ vanishes at a sample where G_H > 0")
            return None
        for i in np.nonzero(sign[:-1] * sign[1:] < 0)[0]:
            zero = brentq(lambda t: float(self.evaluate(np.asarray(t))[2]), s[i], s[i + 1], xtol=1e-14)
            hz, Hz, _ = self.evaluate(np.asarray(zero))
            if float(Hz * Hz / hz) > 1e-10 * max(1.0, float(np.max(G[i:i + 2]))):
                logger.debug(f"▲ H~ changes sign at s={zero:.6g} where G_H > 0")
                return None

        with np.errstate(all="ignore"):
            ratio = G / np.abs(Ht)
        ratio = ratio[np.isfinite(ratio)]
        if ratio.size == 0:
            return None
        best = float(np.max(ratio))
        if best > cap:
            decade = max(2, int(n_samples / max(1.0, math.log10(hi / lo))))
            head, tail = np.log(ratio[:decade]), np.log(ratio[-decade:])
            if np.polyfit(np.arange(tail.size), tail, 1)[0] > 0 or np.polyfit(np.arange(head.size), head, 1)[0] < 0:
                return None
        return best


# ----------------------
# Family constructors
# ----------------------

_S = sp.Symbol("s", positive=True)


def _as_float(value) -> float:
    value = complex(sp.N(value))
    return value.real if value.imag == 0 else float("nan")


def _symbolic_limit(expr: sp.Expr, B: float, endpoint: float) -> float:
    try:
        if endpoint == 0.0:
            lim = sp.limit(expr, _S, 0, "+")
        elif math.isinf(B):
            lim = sp.limit(expr, _S, sp.oo)
        else:
            lim = sp.limit(expr, _S, sp.nsimplify(B), "-")
    except Exception:
        return float("nan")
    if lim == sp.oo:
        return math.inf
    if lim == -sp.oo:
        return -math.inf
    if lim.is_finite and lim.is_real:
        return float(lim)
    return float("nan")


def _default_normalization(left: float, right: float, B: float) -> Normalization:
    if math.isfinite(left):
        return Normalization(NormalizationKind.HARDY_AT_0)
    if math.isfinite(right):
        return Normalization(NormalizationKind.CONJUGATE_HARDY_AT_B)
    return Normalization(NormalizationKind.ANCHORED, s0=1.0 if B > 1.0 else 0.5 * B, value=0.0)


def _normalizing_constant(norm: Normalization, left: float, right: float, Ht0_at: Callable[[float], float],
                          B: float, describe: str) -> float:
    if norm.kind is NormalizationKind.HARDY_AT_0:
        if not math.isfinite(left):
            raise ConstructionError(f"H is not integrable near 0 for {describe}; hardy-at-0 is unavailable")
        return -left
    if norm.kind is NormalizationKind.CONJUGATE_HARDY_AT_B:
        if not math.isfinite(right):
            raise ConstructionError(f"H is not integrable near B for {describe}; conjugate-hardy-at-B is unavailable")
        return -right
    if not 0.0 < norm.s0 < B:
        raise ConstructionError(f"Anchor s0={norm.s0:g} is outside (0, {B:g})")
    return norm.value - Ht0_at(norm.s0)


def _closed_form_triple(family: WeightFamily, params: dict, Ht0: sp.Expr, B: float, offset: float,
                        normalization: Optional[Normalization]) -> WeightTriple:
    """Build a triple from a closed-form second antiderivative H~_0 (H and h by differentiation)."""
    Ht0 = Ht0 - sp.nsimplify(offset) * _S
    H = sp.diff(Ht0, _S)
    h = sp.diff(H, _S)
    return _symbolic_triple(family, params, h, H, Ht0, B, offset, normalization)


def _symbolic_triple(family: WeightFamily, params: dict, h: sp.Expr, H: sp.Expr, Ht0: sp.Expr, B: float,
                     offset: float, normalization: Optional[Normalization]) -> WeightTriple:
    describe = f"{family.value}{params}"
    left = _symbolic_limit(Ht0, B, 0.0)
    right = _symbolic_limit(Ht0, B, B)
    h_fn = sp.lambdify(_S, h, ["scipy", "numpy"])
    H_fn = sp.lambdify(_S, H, ["scipy", "numpy"])
    Ht0_fn = sp.lambdify(_S, Ht0, ["scipy", "numpy"])

    def vec(fn):
        return lambda s: np.broadcast_to(np.asarray(fn(s), dtype=float), np.shape(s)).copy()

    if math.isnan(left):
        left = numeric_limit(vec(Ht0_fn), _approach(0.0, min(1.0, 0.5 * B), B))
    if math.isnan(right):
        right = numeric_limit(vec(Ht0_fn), _approach(B, min(1.0, 0.5 * B), B))

    norm = normalization or _default_normalization(left, right, B)
    K = _normalizing_constant(norm, left, right, lambda t: float(Ht0_fn(t)), B, describe)
    triple = WeightTriple(
        family=family, params=params, B=B, H_offset=offset, normalization=norm,
        _h=vec(h_fn), _H=vec(H_fn), _Ht=lambda s, f=vec(Ht0_fn): f(s) + K,
        _limits=(left + K, right + K),
        _rebuild=lambda n: _symbolic_triple(family, params, h, H, Ht0, B, offset, n),
    )
    _check_positive(triple)
    return triple


def _check_positive(triple: WeightTriple) -> None:
    B = triple.B
    hi = 1e6 if math.isinf(B) else B * (1.0 - 1e-9)
    s = np.geomspace(min(1e-6, 0.5 * hi), hi, 400)
    h = triple.evaluate(s)[0]
    finite = np.isfinite(h)
    if np.any(finite & (h <= 0.0)):
        bad = s[finite & (h <= 0.0)][0]
        raise ConstructionError(f"h is not positive at s={bad:g} for {triple.describe()}")


def _parse_B(B) -> float:
    B = float(B)
    if not B > 0.0:
        raise ConstructionError(f"B must be positive, got {B}")
    return B


def power_weight(alpha: float, B: float = math.inf, offset: float = 0.0,
                 normalization: Optional[Normalization] = None) -> WeightTriple:
    """h(s) = s**alpha, H(s) = s**(alpha+1)/(alpha+1) - C (ln s - C when alpha = -1)."""
    B = _parse_B(B)
    a = sp.nsimplify(alpha, rational=True)
    H0 = sp.log(_S) if a == -1 else _S ** (a + 1) / (a + 1)
    H = H0 - sp.nsimplify(offset) * 1
    Ht0 = sp.integrate(H, _S)
    return _symbolic_triple(WeightFamily.POWER, {"alpha": alpha}, _S ** a, H, Ht0, B, offset, normalization)


def power_log_weight(a: float, b: float, B: float = math.inf, offset: float = 0.0,
                     normalization: Optional[Normalization] = None) -> WeightTriple:
    """H~(s) = s**a * ln(2+s)**b, with H = H~' and h = H~''."""
    Ht0 = _S ** sp.nsimplify(a, rational=True) * sp.log(2 + _S) ** sp.nsimplify(b, rational=True)
    return _closed_form_triple(WeightFamily.POWER_LOG, {"a": a, "b": b}, Ht0, _parse_B(B), offset, normalization)


def exponential_weight(b: float, a: float, B: float = math.inf, offset: float = 0.0,
                       normalization: Optional[Normalization] = None) -> WeightTriple:
    """H~(s) = exp(b * s**a), with H = H~' and h = H~''."""
    Ht0 = sp.exp(sp.nsimplify(b, rational=True) * _S ** sp.nsimplify(a, rational=True))
    return _closed_form_triple(WeightFamily.EXPONENTIAL, {"b": b, "a": a}, Ht0, _parse_B(B), offset, normalization)


def _numeric_triple(family: WeightFamily, params: dict, B: float, offset: float,
                    normalization: Optional[Normalization], s_ref: float,
                    rhs_a: Callable[[float, float], float],
                    H_of: Callable[[np.ndarray, np.ndarray], np.ndarray],
                    h_of: Callable[[np.ndarray, np.ndarray], np.ndarray],
                    a_ref: float) -> WeightTriple:
    ode = _OdeAntiderivatives(rhs_a, H_of, s_ref, a_ref, 0.0)

    def Ht_anchored(s):
        return ode.evaluate(s)[1]

    def Ht_pointwise(points):
        values = np.full(points.shape, np.nan)
        for i, t in enumerate(points):
            try:
                values[i] = ode.evaluate(np.asarray(t))[1]
            except EvaluationError:
                break
        return values

    ref_point = s_ref if s_ref > 0.0 else min(1.0, 0.5 * B)
    left = 0.0 if s_ref == 0.0 else numeric_limit(Ht_pointwise, _approach(0.0, ref_point, B, steps=12))
    right = numeric_limit(Ht_pointwise, _approach(B, ref_point, B, steps=12))
    norm = normalization or _default_normalization(left, right, B)
    K = _normalizing_constant(norm, left, right, lambda t: float(Ht_anchored(np.asarray(t))), B,
                              f"{family.value}{params}")

    def h_fn(s):
        return h_of(s, ode.evaluate(s)[0])

    def H_fn(s):
        return H_of(s, ode.evaluate(s)[0])

    triple = WeightTriple(
        family=family, params=params, B=B, H_offset=offset, normalization=norm,
        _h=h_fn, _H=H_fn, _Ht=lambda s: Ht_anchored(s) + K,
        _limits=(left + K, right + K),
        _rebuild=lambda n: _numeric_triple(family, params, B, offset, n, s_ref, rhs_a, H_of, h_of, a_ref),
    )
    return triple


def weight_from_tau(tau: Union[str, Callable[[np.ndarray], np.ndarray]], anchor: float = 1.0,
                    B: float = math.inf, offset: float = 0.0,
                    normalization: Optional[Normalization] = None) -> WeightTriple:
    """
    H = exp(beta) with beta' = 1/tau and beta(anchor) = 0, so that T_H = tau.

    `tau` is a closed-form expression in `s` or a vectorised callable. The anchor
    may sit at 0 when 1/tau is finite there.
    """
    B = _parse_B(B)
    text = tau if isinstance(tau, str) else getattr(tau, "__name__", "callable")
    tau_fn = ClosedForm.from_text(tau, ("s",)) if isinstance(tau, str) else tau
    if not 0.0 <= anchor < B:
        raise ConstructionError(f"Anchor {anchor:g} is outside [0, {B:g})")
    sample_hi = 1e6 if math.isinf(B) else B * (1.0 - 1e-9)
    samples = np.concatenate([[anchor], np.geomspace(1e-6 * min(1.0, sample_hi), sample_hi, 200)])
    with np.errstate(all="ignore"):
        values = np.asarray(tau_fn(samples), dtype=float)
    if not np.all(np.isfinite(values[1:])) or np.any(values[1:] <= 0.0):
        raise ConstructionError(f"tau={text} is not positive and finite inside (0, {B:g})")
    if not (np.isfinite(values[0]) and values[0] > 0.0):
        raise ConstructionError(f"1/tau diverges at the anchor {anchor:g}")

    def rhs_beta(s, beta):
        return 1.0 / float(tau_fn(np.asarray(s)))

    def H_of(s, beta):
        return np.exp(beta) - offset

    def h_of(s, beta):
        return np.exp(beta) / np.asarray(tau_fn(np.asarray(s)), dtype=float)

    triple = _numeric_triple(WeightFamily.TAU, {"tau": text, "anchor": anchor}, B, offset, normalization,
                             anchor, rhs_beta, H_of, h_of, 0.0)
    logger.debug(f"✓ Built tau-generated weight {triple.describe()}")
    return triple


def custom_weight(h_text: str, B: float = math.inf, offset: float = 0.0,
                  normalization: Optional[Normalization] = None) -> WeightTriple:
    """
    h given as a closed-form expression in `s`. H and H~ come from sympy when it
    finds elementary antiderivatives, otherwise from numeric integration. H is
    the Hardy transform of h minus C when h is integrable near 0, else anchored
    at s = min(1, B/2) with value -C.
    """
    B = _parse_B(B)
    form = ClosedForm.from_text(h_text, ("s",))
    h_expr = form.expr.subs(form.symbols[0], _S)
    params = {"h": h_text}
    s_ref = 1.0 if B > 1.0 else 0.5 * B
    try:
        H0 = sp.integrate(h_expr, _S)
        closed = not H0.has(sp.Integral)
    except Exception:
        closed = False
    if closed:
        at0 = _symbolic_limit(H0, B, 0.0)
        H = H0 - (at0 if math.isfinite(at0) else H0.subs(_S, sp.nsimplify(s_ref))) - sp.nsimplify(offset)
        Ht0 = sp.integrate(H, _S)
        if not Ht0.has(sp.Integral):
            return _symbolic_triple(WeightFamily.CUSTOM, params, h_expr, H, Ht0, B, offset, normalization)

    def h_vec(s):
        return form(np.asarray(s, dtype=float))

    value, _, *rest = quad(lambda t: float(h_vec(t)), 0.0, s_ref, epsrel=RTOL, full_output=1)
    H_ref = (value if len(rest) == 1 else 0.0) - offset

    def rhs_H(s, H):
        return float(h_vec(s))

    def H_of(s, H):
        return np.asarray(H, dtype=float)

    def h_of(s, H):
        return h_vec(s)

    return _numeric_triple(WeightFamily.CUSTOM, params, B, offset, normalization, s_ref, rhs_H, H_of, h_of, H_ref)


# ----------------------
# Operation-style entry points
# ----------------------

def eval_triple(w: WeightTriple, s: ArrayLike):
    return w.eval_triple(s)


def transform_T(w: WeightTriple, s: ArrayLike):
    return w.transform_T(s)


def transform_G(w: WeightTriple, s: ArrayLike):
    return w.transform_G(s)


def extension_interval(w: WeightTriple) -> Interval:
    return w.extension_interval()


def ghc_constant(w: WeightTriple, sample_range: Tuple[float, float], n_samples: int = 2000) -> Optional[float]:
    return w.ghc_constant(sample_range, n_samples)


def reanchor(w: WeightTriple, normalization: Normalization) -> WeightTriple:
    """Same h and H, with H~ fixed by another normalization (shifts H~ by a constant)."""
    return w.with_normalization(normalization)


__all__ = [
    "WeightFamily", "NormalizationKind", "Normalization", "Interval", "WeightTriple",
    "power_weight", "power_log_weight", "exponential_weight", "weight_from_tau", "custom_weight",
    "eval_triple", "transform_T", "transform_G", "extension_interval", "ghc_constant", "reanchor",
    "numeric_limit",
]
