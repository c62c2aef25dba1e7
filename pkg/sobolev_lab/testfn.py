"""
Closed-form test functions u with analytic value/gradient/Hessian jets, value
ranges over a domain, the restricted-set indicator {0 < u < B} and a
finite-difference oracle for the jets.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import sympy as sp
from scipy.optimize import minimize

from sobolev_lab.errors import ConstructionError, SingularPointError, StencilError
from sobolev_lab.expressions import ClosedForm, coordinate_names
from sobolev_lab.geometry import Domain, DomainKind
from sobolev_lab.weights import WeightTriple

logger = logging.getLogger(__name__)

Jet = Tuple[np.ndarray, np.ndarray, np.ndarray]


class TestFamily(str, Enum):
    RADIAL_POWER = "radial-power"
    QUADRATIC_RADIAL = "quadratic-radial"
    BUMP = "bump"
    SIGNED_POWER_1D = "signed-power-1d"
    HARMONIC_POLYNOMIAL = "harmonic-polynomial"
    HARMONIC_SERIES = "harmonic-series"
    CONSTANT = "constant"
    CUSTOM = "custom-closed-form"


@dataclass(frozen=True, eq=False)
class TestFunction:
    """
    u = scale * u_0 + shift for a closed-form u_0. Jets come from `form` (sympy)
    except for families with a hand-written jet. Bumps vanish identically
    outside their support ball.
    """

    __test__ = False

    family: TestFamily
    params: dict
    dimension: int
    form: Optional[ClosedForm] = None
    support: Optional[Tuple[Tuple[float, ...], float]] = None
    singular: Callable[[np.ndarray], np.ndarray] = field(default=lambda pts: np.zeros(len(pts), dtype=bool), repr=False)
    rough_distance: Callable[[np.ndarray], np.ndarray] = field(default=lambda pts: np.full(len(pts), np.inf), repr=False)
    nonnegative: bool = False
    _jet: Optional[Callable[[np.ndarray], Jet]] = field(default=None, repr=False)

    def describe(self) -> str:
        args = ", ".join(f"{k}={v}" for k, v in self.params.items())
        return f"{self.family.value}({args})"

    # -- vectorised jets --

    def _support_mask(self, points: np.ndarray) -> Optional[np.ndarray]:
        if self.support is None:
            return None
        center, radius = self.support
        return np.linalg.norm(points - np.asarray(center), axis=1) < radius

    def jet(self, points: np.ndarray) -> Jet:
        """(value (m,), gradient (m,n), hessian (m,n,n)) at an (m, n) array of points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self._jet is not None:
            return self._jet(points)
        value = self.form.at_points(points)
        grad = self.form.gradient_at(points)
        hess = self.form.hessian_at(points)
        mask = self._support_mask(points)
        if mask is not None:
            value[~mask] = 0.0
            grad[~mask] = 0.0
            hess[~mask] = 0.0
        return value, grad, hess

    def value(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self._jet is not None:
            return self._jet(points)[0]
        value = self.form.at_points(points)
        mask = self._support_mask(points)
        if mask is not None:
            value[~mask] = 0.0
        return value

    def gradient(self, points: np.ndarray) -> np.ndarray:
        return self.jet(points)[1]

    def hessian(self, points: np.ndarray) -> np.ndarray:
        return self.jet(points)[2]

    def eval_jet(self, x: Sequence[float]) -> Tuple[float, np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)[None, :]
        if self.singular(x)[0]:
            raise SingularPointError(f"{self.describe()} is not differentiable at {x[0].tolist()}")
        value, grad, hess = self.jet(x)
        return float(value[0]), grad[0], hess[0]


# ----------------------
# Families
# ----------------------

def _affine(expr: sp.Expr, scale: float, shift: float) -> sp.Expr:
    return sp.nsimplify(scale, rational=True) * expr + sp.nsimplify(shift, rational=True)


def _radius(x) -> sp.Expr:
    return sp.sqrt(sum(xi ** 2 for xi in x))


def _symbols(dimension: int):
    return sp.symbols(coordinate_names(dimension), real=True)


def radial_power(alpha: float, dimension: int = 2, scale: float = 1.0, shift: float = 0.0) -> TestFunction:
    """(1 - |x|)**alpha on the unit ball; not differentiable at x = 0."""
    x = _symbols(dimension)
    expr = _affine((1 - _radius(x)) ** sp.nsimplify(alpha, rational=True), scale, shift)
    return TestFunction(
        TestFamily.RADIAL_POWER, {"alpha": alpha, "scale": scale, "shift": shift}, dimension,
        form=ClosedForm(expr, coordinate_names(dimension)),
        singular=lambda pts: np.linalg.norm(pts, axis=1) == 0.0,
        rough_distance=lambda pts: np.linalg.norm(pts, axis=1),
        nonnegative=scale >= 0 and shift >= 0,
    )


def quadratic_radial(a: float = 2.0, b: float = 1.0, dimension: int = 2, scale: float = 1.0,
                     shift: float = 0.0) -> TestFunction:
    """a - b|x|**2."""
    x = _symbols(dimension)
    expr = _affine(sp.nsimplify(a, rational=True) - sp.nsimplify(b, rational=True) * _radius(x) ** 2, scale, shift)
    return TestFunction(TestFamily.QUADRATIC_RADIAL, {"a": a, "b": b, "scale": scale, "shift": shift}, dimension,
                        form=ClosedForm(sp.expand(expr), coordinate_names(dimension)))


def bump(k: int = 2, center: Optional[Sequence[float]] = None, radius: float = 1.0, dimension: int = 2,
         scale: float = 1.0) -> TestFunction:
    """(1 - |x - c|**2 / rho**2)**k inside B(c, rho), extended by 0."""
    if int(k) != k or k < 1:
        raise ConstructionError(f"Bump order k must be a positive integer, got {k}")
    center = tuple(float(v) for v in (center if center is not None else (0.0,) * dimension))
    if len(center) != dimension:
        raise ConstructionError(f"Bump center {center} does not have dimension {dimension}")
    x = _symbols(dimension)
    rho2 = sp.nsimplify(radius, rational=True) ** 2
    d2 = sum((xi - sp.nsimplify(ci, rational=True)) ** 2 for xi, ci in zip(x, center))
    expr = _affine((1 - d2 / rho2) ** int(k), scale, 0.0)
    return TestFunction(
        TestFamily.BUMP, {"k": int(k), "center": list(center), "radius": radius, "scale": scale}, dimension,
        form=ClosedForm(sp.expand(expr), coordinate_names(dimension)),
        support=(center, float(radius)),
        rough_distance=lambda pts: np.abs(float(radius) - np.linalg.norm(pts - np.asarray(center), axis=1)),
        nonnegative=scale >= 0,
    )


def signed_power_1d(epsilon: float, dimension: int = 2, scale: float = 1.0, shift: float = 1.0) -> TestFunction:
    """
    sgn(x1)|x1|**(1/2 + epsilon) + 1. Its Hessian is not locally integrable
    across x1 = 0 for small epsilon.
    """
    a = 0.5 + epsilon

    def jet(points: np.ndarray) -> Jet:
        t = points[:, 0]
        at = np.abs(t)
        with np.errstate(all="ignore"):
            value = scale * np.sign(t) * at ** a + shift
            d1 = scale * a * at ** (a - 1.0)
            d2 = scale * a * (a - 1.0) * np.sign(t) * at ** (a - 2.0)
        grad = np.zeros_like(points)
        grad[:, 0] = d1
        hess = np.zeros((points.shape[0], dimension, dimension))
        hess[:, 0, 0] = d2
        return value, grad, hess

    return TestFunction(
        TestFamily.SIGNED_POWER_1D, {"epsilon": epsilon, "scale": scale, "shift": shift}, dimension,
        singular=lambda pts: pts[:, 0] == 0.0,
        rough_distance=lambda pts: np.abs(pts[:, 0]),
        _jet=jet,
    )


def _complex_power(x, degree: int) -> Tuple[sp.Expr, sp.Expr]:
    z = sp.expand((x[0] + sp.I * x[1]) ** degree)
    return sp.re(z), sp.im(z)


def harmonic_polynomial(degree: int, index: int = 0, dimension: int = 2, scale: float = 1.0,
                        shift: float = 0.0) -> TestFunction:
    """Re (index 0) or Im (index 1) of (x1 + i x2)**degree."""
    if index not in (0, 1):
        raise ConstructionError(f"Harmonic polynomial index must be 0 (real part) or 1 (imaginary part), got {index}")
    x = _symbols(dimension)
    expr = _affine(_complex_power(x, int(degree))[index], scale, shift)
    return TestFunction(TestFamily.HARMONIC_POLYNOMIAL,
                        {"degree": degree, "index": index, "scale": scale, "shift": shift}, dimension,
                        form=ClosedForm(sp.expand(expr), coordinate_names(dimension)))


def harmonic_series(modes: Sequence[Tuple[int, float, float]], a0: float = 0.0, dimension: int = 2) -> TestFunction:
    """a0 + sum r**k (a_k cos k theta + b_k sin k theta), the harmonic extension of a trigonometric polynomial."""
    x = _symbols(dimension)
    expr = sp.nsimplify(a0, rational=True)
    for k, a, b in modes:
        re, im = _complex_power(x, int(k))
        expr += sp.nsimplify(a, rational=True) * re + sp.nsimplify(b, rational=True) * im
    return TestFunction(TestFamily.HARMONIC_SERIES, {"a0": a0, "modes": [list(m) for m in modes]}, dimension,
                        form=ClosedForm(sp.expand(expr), coordinate_names(dimension)))


def constant(c: float, dimension: int = 2) -> TestFunction:
    return TestFunction(TestFamily.CONSTANT, {"c": c}, dimension,
                        form=ClosedForm(sp.nsimplify(c, rational=True) + 0 * _symbols(dimension)[0],
                                        coordinate_names(dimension)),
                        nonnegative=c >= 0)


def custom(expression: str, dimension: int = 2, nonnegative: bool = False) -> TestFunction:
    form = ClosedForm.from_text(expression, coordinate_names(dimension))
    return TestFunction(TestFamily.CUSTOM, {"expression": expression}, dimension, form=form, nonnegative=nonnegative)


# ----------------------
# Operations
# ----------------------

def eval_jet(u: TestFunction, x: Sequence[float]) -> Tuple[float, np.ndarray, np.ndarray]:
    return u.eval_jet(x)


def value_range(u: TestFunction, domain: Domain, n_samples: int = 4096) -> Tuple[float, float]:
    """
    (inf u, sup u) over the closed domain. Exact for families whose extremes are
    known in closed form, otherwise dense sampling polished by local search.
    """
    p = u.params
    centered_ball = domain.kind is DomainKind.BALL and not any(domain.center)
    s, c = p.get("scale", 1.0), p.get("shift", 0.0)

    def affine(lo, hi):
        a, b = s * lo + c, s * hi + c
        return (min(a, b), max(a, b))

    if u.family is TestFamily.CONSTANT:
        return (p["c"], p["c"])
    if u.family is TestFamily.RADIAL_POWER and centered_ball and domain.radius == 1.0:
        alpha = p["alpha"]
        if alpha < 0:
            return affine(1.0, math.inf) if s >= 0 else (-math.inf, c + s)
        return affine(0.0, 1.0)
    if u.family is TestFamily.QUADRATIC_RADIAL and centered_ball:
        # a - b t with t = |x|^2 in [0, R^2]
        ends = (p["a"], p["a"] - p["b"] * domain.radius ** 2)
        return affine(min(ends), max(ends))
    if u.family is TestFamily.SIGNED_POWER_1D and domain.kind is DomainKind.BOX:
        ends = u.value(np.array([[domain.lo[0]] + [0.0] * (u.dimension - 1),
                                 [domain.hi[0]] + [0.0] * (u.dimension - 1)]))
        return (float(ends.min()), float(ends.max()))

    points = domain.sample_points(n_samples)
    values = u.value(points)
    finite = np.isfinite(values)
    lo = float(np.min(values[finite])) if np.any(finite) else -math.inf
    hi = float(np.max(values[finite])) if np.any(finite) else math.inf
    if np.any(np.isposinf(values)):
        hi = math.inf
    if np.any(np.isneginf(values)):
        lo = -math.inf
    for sign in (1.0, -1.0):
        extreme = np.argmin(sign * np.where(finite, values, np.inf * sign))
        result = minimize(lambda y: sign * float(u.value(domain.project(y)[None, :])[0]), points[extreme],
                          method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 2000})
        if np.isfinite(result.fun):
            if sign > 0:
                lo = min(lo, float(result.fun))
            else:
                hi = max(hi, -float(result.fun))
    return lo, hi


def restricted_indicator(u: TestFunction, w: WeightTriple, points: np.ndarray) -> np.ndarray:
    """True exactly where 0 < u(x) < B."""
    values = u.value(points)
    return (values > 0.0) & (values < w.B)


def fd_derivatives(f: Callable[[np.ndarray], np.ndarray], x: Sequence[float], step: float,
                   domain: Optional[Domain] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Fourth-order central differences of a scalar field: gradient (n,) and
    Hessian (n, n). Every stencil point must lie in the open domain.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    eye = np.eye(n) * step
    offsets = (-2, -1, 1, 2)
    weights = {-2: 1.0, -1: -8.0, 1: 8.0, 2: -1.0}

    points, index = [x], {}
    for i in range(n):
        for a in offsets:
            index[(i, a)] = len(points)
            points.append(x + a * eye[i])
        for j in range(i + 1, n):
            for a in offsets:
                for b in offsets:
                    index[(i, a, j, b)] = len(points)
                    points.append(x + a * eye[i] + b * eye[j])
    points = np.asarray(points)
    if domain is not None and not np.all(domain.contains(points)):
        raise StencilError(f"Finite-difference stencil of width {2 * step:g} around {x.tolist()} leaves the domain")
    values = np.asarray(f(points), dtype=float)
    f0 = values[0]

    grad = np.empty(n)
    hess = np.empty((n, n))
    for i in range(n):
        v = {a: values[index[(i, a)]] for a in offsets}
        grad[i] = sum(weights[a] * v[a] for a in offsets) / (12.0 * step)
        hess[i, i] = (-v[2] + 16.0 * v[1] - 30.0 * f0 + 16.0 * v[-1] - v[-2]) / (12.0 * step ** 2)
        for j in range(i + 1, n):
            mixed = sum(weights[a] * weights[b] * values[index[(i, a, j, b)]] for a in offsets for b in offsets)
            hess[i, j] = hess[j, i] = mixed / (144.0 * step ** 2)
    return grad, hess


def fd_jet(u: TestFunction, x: Sequence[float], step: float = 1e-4,
           domain: Optional[Domain] = None) -> Tuple[np.ndarray, np.ndarray]:
    return fd_derivatives(u.value, x, step, domain)
