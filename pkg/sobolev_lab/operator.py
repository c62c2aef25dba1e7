"""
The ellipticity matrix field A(x), the operator Pu = A : D^2 u, the A-norm, the
matrix divergences div A and div^2 A, and the constants c_A, C_A, d_A.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import sympy as sp
from scipy.optimize import minimize

from sobolev_lab.errors import ConstructionError, EllipticityViolation
from sobolev_lab.expressions import ClosedForm, coordinate_names, parse
from sobolev_lab.geometry import Domain

logger = logging.getLogger(__name__)

A2_TOLERANCE = 1e-12
DEFAULT_SAMPLES = 10_000


class MatrixKind(str, Enum):
    IDENTITY = "identity"
    CONSTANT = "constant"
    DIAGONAL_AFFINE = "diagonal-affine"
    SCALAR_PROFILE = "scalar-profile"
    CUSTOM = "custom-closed-form"


@dataclass(frozen=True)
class Estimate:
    """A numeric constant together with how it was obtained."""

    value: float
    provenance: str


@dataclass(frozen=True)
class DivergenceData:
    divA: Callable[[np.ndarray], np.ndarray]
    div2A: Callable[[np.ndarray], np.ndarray]
    divA_sup: Estimate
    d_A: Estimate
    A2_holds: bool


@dataclass(frozen=True, eq=False)
class MatrixField:
    """
    Symmetric matrix field with closed-form entries in x1..xn. Build through the
    kind constructors (`identity`, `constant`, `diagonal_affine`,
    `scalar_profile`, `custom`).
    """

    kind: MatrixKind
    dimension: int
    entries: sp.ImmutableMatrix
    label: str = ""
    _variables: Tuple[str, ...] = field(default=(), repr=False)

    @classmethod
    def _build(cls, kind: MatrixKind, matrix: sp.Matrix, label: str) -> "MatrixField":
        n = matrix.shape[0]
        if matrix.shape != (n, n) or n < 2:
            raise ConstructionError(f"A must be a square n x n matrix with n >= 2, got {matrix.shape}")
        if sp.simplify(matrix - matrix.T) != sp.zeros(n, n):
            raise ConstructionError(f"A is not symmetric: {label}")
        return cls(kind, n, sp.ImmutableMatrix(matrix), label, coordinate_names(n))

    @classmethod
    def identity(cls, dimension: int = 2) -> "MatrixField":
        return cls._build(MatrixKind.IDENTITY, sp.eye(dimension), "Id")

    @classmethod
    def constant(cls, matrix: Sequence[Sequence[float]]) -> "MatrixField":
        rows = [[sp.nsimplify(v, rational=True) for v in row] for row in matrix]
        return cls._build(MatrixKind.CONSTANT, sp.Matrix(rows), f"constant({[list(r) for r in matrix]})")

    @classmethod
    def diagonal_affine(cls, constants: Sequence[float], slopes: Sequence[Sequence[float]]) -> "MatrixField":
        """a_ii(x) = constants[i] + slopes[i] . x; off-diagonal entries vanish."""
        n = len(constants)
        x = sp.symbols(coordinate_names(n), real=True)
        diag = [sp.nsimplify(constants[i], rational=True)
                + sum(sp.nsimplify(slopes[i][j], rational=True) * x[j] for j in range(n)) for i in range(n)]
        return cls._build(MatrixKind.DIAGONAL_AFFINE, sp.diag(*diag), f"diag-affine({list(constants)}, {slopes})")

    @classmethod
    def scalar_profile(cls, profile: str, dimension: int = 2) -> "MatrixField":
        phi = parse(profile, coordinate_names(dimension))
        return cls._build(MatrixKind.SCALAR_PROFILE, phi * sp.eye(dimension), f"({profile})*Id")

    @classmethod
    def custom(cls, entries: Sequence[Sequence[str]]) -> "MatrixField":
        n = len(entries)
        names = coordinate_names(n)
        matrix = sp.Matrix([[parse(str(e), names) for e in row] for row in entries])
        return cls._build(MatrixKind.CUSTOM, matrix, f"custom({[list(r) for r in entries]})")

    # -- closed forms --

    @cached_property
    def _entry_forms(self) -> List[List[ClosedForm]]:
        return [[ClosedForm(self.entries[i, j], self._variables) for j in range(self.dimension)]
                for i in range(self.dimension)]

    @cached_property
    def _divergence_exprs(self) -> List[sp.Expr]:
        # div A^i = sum_j d a_ij / d x_j (rows of A)
        x = sp.symbols(self._variables, real=True)
        return [sp.simplify(sum(sp.diff(self.entries[i, j], x[j]) for j in range(self.dimension)))
                for i in range(self.dimension)]

    @cached_property
    def _div2_expr(self) -> sp.Expr:
        x = sp.symbols(self._variables, real=True)
        return sp.simplify(sum(sp.diff(self._divergence_exprs[i], x[i]) for i in range(self.dimension)))

    def is_constant(self) -> bool:
        return all(form.is_constant() for row in self._entry_forms for form in row)

    # -- evaluation --

    def at(self, points: np.ndarray) -> np.ndarray:
        """A(x) for an (m, n) array of points, shape (m, n, n)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        rows = [np.stack([f.at_points(points) for f in row], axis=-1) for row in self._entry_forms]
        return np.stack(rows, axis=-2)

    def divA_at(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.stack([ClosedForm(e, self._variables).at_points(points) for e in self._divergence_exprs], axis=-1)

    def div2A_at(self, points: np.ndarray) -> np.ndarray:
        return ClosedForm(self._div2_expr, self._variables).at_points(points)

    def partial_at(self, points: np.ndarray, i: int, j: int, k: int) -> np.ndarray:
        """d a_ij / d x_k."""
        return self._entry_forms[i][j].derivative(self._variables[k]).at_points(points)

    def div_A_grad(self, u_form: ClosedForm, points: np.ndarray) -> np.ndarray:
        """div(A grad u) evaluated from the closed forms of A and u."""
        x = sp.symbols(self._variables, real=True)
        u = u_form.expr.subs(dict(zip(u_form.symbols, x)))
        flux = self.entries * sp.Matrix([sp.diff(u, xi) for xi in x])
        expr = sum(sp.diff(flux[i], x[i]) for i in range(self.dimension))
        return ClosedForm(expr, self._variables).at_points(points)


# ----------------------
# Operations
# ----------------------

def _eigen_extremes(A: MatrixField, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    eig = np.linalg.eigvalsh(A.at(points))
    return eig[:, 0], eig[:, -1]


def _polish(A: MatrixField, domain: Domain, start: np.ndarray, sign: float) -> Tuple[float, np.ndarray]:
    """Refine an eigenvalue extreme locally with bounded L-BFGS-B inside the bounding box."""
    lo, hi = domain.bounding_box()

    def objective(x):
        x = domain.project(x)
        e = np.linalg.eigvalsh(A.at(x[None, :])[0])
        return sign * (e[0] if sign > 0 else e[-1])

    result = minimize(objective, start, method="L-BFGS-B", bounds=list(zip(lo, hi)))
    if np.isfinite(result.fun):
        return sign * float(result.fun), domain.project(result.x)
    return sign * objective(start), start


def ellipticity_constants(A: MatrixField, domain: Domain, n_samples: int = DEFAULT_SAMPLES,
                          seed: Optional[int] = None) -> Tuple[Estimate, Estimate]:
    """
    (c_A, C_A): infimum of the smallest and supremum of the largest eigenvalue of
    A over the closed domain. Exact for constant kinds, otherwise quasi-random
    sampling polished by local optimisation.
    """
    if A.dimension != domain.dimension:
        raise ConstructionError(f"A has dimension {A.dimension}, domain has {domain.dimension}")
    if A.is_constant():
        e = np.linalg.eigvalsh(A.at(np.zeros((1, A.dimension)))[0])
        if e[0] <= 0.0:
            raise EllipticityViolation(f"A={A.label} has minimum eigenvalue {e[0]:g} <= 0")
        return Estimate(float(e[0]), "exact"), Estimate(float(e[-1]), "exact")

    points = domain.sample_points(n_samples, seed)
    lows, highs = _eigen_extremes(A, points)
    if np.any(lows <= 0.0):
        bad = points[np.argmin(lows)]
        raise EllipticityViolation(f"A={A.label} has minimum eigenvalue {lows.min():g} <= 0 at {bad.tolist()}", )
    c_A, _ = _polish(A, domain, points[np.argmin(lows)], 1.0)
    C_A, _ = _polish(A, domain, points[np.argmax(highs)], -1.0)
    c_A, C_A = min(c_A, float(lows.min())), max(C_A, float(highs.max()))
    if c_A <= 0.0:
        raise EllipticityViolation(f"A={A.label} loses positive definiteness (c_A={c_A:g})")
    provenance = f"sampled ({points.shape[0]} points) + local polish"
    logger.debug(f"✓ c_A={c_A:.6g}, C_A={C_A:.6g} for {A.label} on {domain.describe()}")
    return Estimate(c_A, provenance), Estimate(C_A, provenance)


def divergence_data(A: MatrixField, domain: Domain, n_samples: int = DEFAULT_SAMPLES,
                    c_A: Optional[Estimate] = None, seed: Optional[int] = None) -> DivergenceData:
    """
    div A (row-wise divergence), div^2 A, sup |div A|, d_A = sup|div A|^2 / c_A and
    whether div^2 A <= 0 holds at every sample (tolerance 1e-12).
    """
    c_A = c_A or ellipticity_constants(A, domain, n_samples, seed)[0]
    points = domain.sample_points(n_samples, seed)
    divA_vals = A.divA_at(points)
    div2_vals = A.div2A_at(points)
    constant_div = all(not e.free_symbols for e in A._divergence_exprs)
    sup = float(np.max(np.linalg.norm(divA_vals, axis=1)))
    if not constant_div:
        start = points[np.argmax(np.linalg.norm(divA_vals, axis=1))]
        lo, hi = domain.bounding_box()

        def neg_norm(x):
            x = domain.project(x)
            return -float(np.linalg.norm(A.divA_at(x[None, :])[0]))

        result = minimize(neg_norm, start, method="L-BFGS-B", bounds=list(zip(lo, hi)))
        if np.isfinite(result.fun):
            sup = max(sup, -float(result.fun))
    provenance = "exact" if constant_div else f"sampled ({points.shape[0]} points) + local polish"
    d_A = sup * sup / c_A.value
    d_provenance = provenance if c_A.provenance == "exact" else f"{provenance}; c_A {c_A.provenance}"
    A2_holds = bool(np.all(div2_vals <= A2_TOLERANCE))
    return DivergenceData(
        divA=A.divA_at,
        div2A=A.div2A_at,
        divA_sup=Estimate(sup, provenance),
        d_A=Estimate(d_A, d_provenance),
        A2_holds=A2_holds,
    )


def frobenius_pairing(A: MatrixField, hessian: np.ndarray, points: np.ndarray) -> np.ndarray:
    """sum_ij a_ij(x) M_ij(x) for matrices of shape (m, n, n)."""
    return np.einsum("mij,mij->m", A.at(points), np.asarray(hessian, dtype=float).reshape(-1, A.dimension, A.dimension))


def a_norm_squared(A: MatrixField, points: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    q = np.einsum("mi,mij,mj->m", vectors, A.at(points), vectors)
    if np.any(q < -1e-14 * np.maximum(1.0, np.sum(vectors * vectors, axis=1))):
        raise EllipticityViolation(f"Quadratic form of A={A.label} is negative")
    return np.maximum(q, 0.0)


def a_norm(A: MatrixField, x: Sequence[float], xi: Sequence[float]) -> float:
    """sqrt(xi^T A(x) xi)."""
    return float(np.sqrt(a_norm_squared(A, np.asarray(x, dtype=float)[None, :], np.asarray(xi, dtype=float)[None, :])[0]))


def apply_P(A: MatrixField, u, points: np.ndarray) -> np.ndarray:
    """Pu = sum_ij a_ij(x) d^2u/dx_i dx_j at interior points, for a test function u."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return frobenius_pairing(A, u.hessian(points), points)
