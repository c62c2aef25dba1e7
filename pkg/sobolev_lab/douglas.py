"""
Potential theory on the unit disk: the Douglas energy of boundary data, its
Fourier form, Poisson extensions, the Feller-kernel (Sobolev-Bregman) double
form and the boundary-only representation of the boundary term Θ for P = Δ.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from sobolev_lab.errors import ConstructionError, DomainError, NonFiniteIntegrand
from sobolev_lab.expressions import ClosedForm
from sobolev_lab.geometry import (Domain, Verdict, boundary_rule, convergence_verdict, integrate, integrate_values,
                                  interior_rule, pairwise_sum)
from sobolev_lab.models import DouglasReport, RepresentationReport
from sobolev_lab.settings import get_settings
from sobolev_lab.testfn import TestFunction, harmonic_series

logger = logging.getLogger(__name__)

FFT_SIZE = 1 << 12
MAX_EXTENSION_MODES = 32
DEFAULT_LEVELS = (4, 5, 6, 7, 8, 9)

Mode = Tuple[int, float, float]


class Representation(str, Enum):
    TRIG_POLYNOMIAL = "trig-polynomial"
    CLOSED_FORM = "closed-form"


class Diagonal(str, Enum):
    EXTEND = "extend"
    EXCLUDE = "exclude"


def signed_power(a: np.ndarray, kappa: float) -> np.ndarray:
    """|a|**kappa * sgn(a), with 0 at a = 0."""
    a = np.asarray(a, dtype=float)
    with np.errstate(all="ignore"):
        return np.where(a == 0.0, 0.0, np.sign(a) * np.abs(a) ** kappa)


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """
    2π-periodic data g(θ) on the unit circle: either a trigonometric polynomial
    a0 + Σ (a_k cos kθ + b_k sin kθ) or a closed form / callable in θ.
    """

    representation: Representation
    label: str
    modes: Tuple[Mode, ...] = ()
    a0: float = 0.0
    _fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    _dfn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)

    @classmethod
    def trig_polynomial(cls, modes: Sequence[Sequence[float]], a0: float = 0.0) -> "BoundaryData":
        cleaned = []
        for mode in modes:
            k, a = int(mode[0]), float(mode[1])
            b = float(mode[2]) if len(mode) > 2 else 0.0
            if k < 1 or k != mode[0]:
                raise ConstructionError(f"Mode index must be a positive integer, got {mode[0]}")
            cleaned.append((k, a, b))
        terms = " + ".join(f"{a:g}cos{k}θ + {b:g}sin{k}θ" for k, a, b in cleaned)
        return cls(Representation.TRIG_POLYNOMIAL, f"{a0:g} + {terms}" if terms else f"{a0:g}",
                   modes=tuple(cleaned), a0=float(a0))

    @classmethod
    def closed_form(cls, text: str) -> "BoundaryData":
        """g given as an expression in `theta`, e.g. ``"exp(cos(theta))"``."""
        form = ClosedForm.from_text(text, ("theta",))
        return cls(Representation.CLOSED_FORM, text, _fn=form, _dfn=form.derivative("theta"))

    @classmethod
    def from_callable(cls, fn: Callable[[np.ndarray], np.ndarray], label: str) -> "BoundaryData":
        return cls(Representation.CLOSED_FORM, label, _fn=fn)

    @classmethod
    def trace_of(cls, u: TestFunction) -> "BoundaryData":
        """θ ↦ u(cos θ, sin θ)."""
        if u.dimension != 2:
            raise DomainError(f"Boundary data lives on the unit circle; {u.describe()} has dimension {u.dimension}")
        return cls.from_callable(lambda t: u.value(np.stack([np.cos(t), np.sin(t)], axis=1)),
                                 f"trace of {u.describe()}")

    def __call__(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.representation is Representation.TRIG_POLYNOMIAL:
            out = np.full(theta.shape, self.a0)
            for k, a, b in self.modes:
                out = out + a * np.cos(k * theta) + b * np.sin(k * theta)
            return out
        return np.asarray(self._fn(theta), dtype=float).reshape(theta.shape)

    def derivative(self, theta: np.ndarray) -> np.ndarray:
        """g'(θ): exact for trig polynomials and closed forms, spectral otherwise."""
        theta = np.asarray(theta, dtype=float)
        if self.representation is Representation.TRIG_POLYNOMIAL:
            out = np.zeros(theta.shape)
            for k, a, b in self.modes:
                out = out - k * a * np.sin(k * theta) + k * b * np.cos(k * theta)
            return out
        if self._dfn is not None:
            return np.asarray(self._dfn(theta), dtype=float).reshape(theta.shape)
        a0, modes = fourier_coefficients(self)
        return BoundaryData.trig_polynomial(modes, a0).derivative(theta)

    def rotated(self, phi: float) -> "BoundaryData":
        """θ ↦ g(θ + φ)."""
        if self.representation is Representation.TRIG_POLYNOMIAL:
            modes = []
            for k, a, b in self.modes:
                c, s = math.cos(k * phi), math.sin(k * phi)
                modes.append((k, a * c + b * s, b * c - a * s))
            return BoundaryData.trig_polynomial(modes, self.a0)
        return BoundaryData(Representation.CLOSED_FORM, f"{self.label} rotated by {phi:g}",
                            _fn=lambda t: self(np.asarray(t) + phi),
                            _dfn=None if self._dfn is None else (lambda t: self.derivative(np.asarray(t) + phi)))


def equispaced(level: int) -> np.ndarray:
    n = 1 << level
    return 2.0 * np.pi * np.arange(n) / n


def fourier_coefficients(g: BoundaryData, size: int = FFT_SIZE, tol: float = 1e-14) -> Tuple[float, List[Mode]]:
    """(a0, [(k, a_k, b_k)]) from the FFT of `size` samples; negligible modes dropped."""
    if g.representation is Representation.TRIG_POLYNOMIAL:
        return g.a0, list(g.modes)
    c = np.fft.rfft(g(equispaced(int(math.log2(size))))) / size
    a, b = 2.0 * c.real, -2.0 * c.imag
    scale = max(1.0, float(np.max(np.abs(c))))
    modes = [(k, float(a[k]), float(b[k])) for k in range(1, size // 2)
             if abs(a[k]) + abs(b[k]) > tol * scale]
    return float(c[0].real), modes


# ----------------------
# Double boundary forms
# ----------------------

def _row_block(rows: np.ndarray, theta: np.ndarray, kernel: Callable[[np.ndarray, np.ndarray], np.ndarray],
               diagonal_value: np.ndarray, diagonal: Diagonal) -> np.ndarray:
    with np.errstate(all="ignore"):
        block = kernel(rows[:, None], np.arange(theta.size)[None, :])
    on_diag = rows[:, None] == np.arange(theta.size)[None, :]
    fill = diagonal_value[rows][:, None] if diagonal is Diagonal.EXTEND else 0.0
    block = np.where(on_diag, fill, block)
    return np.array([pairwise_sum(row) for row in block])


def _double_sum(theta: np.ndarray, kernel, diagonal_value: np.ndarray, diagonal: Diagonal, label: str) -> float:
    """Periodic trapezoid sum Σ_ij kernel(i, j) (2π/N)^2, parallel over rows with a fixed reduction tree."""
    n = theta.size
    settings = get_settings()
    per_chunk = max(1, settings.chunk_size // n)
    chunks = [np.arange(i, min(n, i + per_chunk)) for i in range(0, n, per_chunk)]
    if settings.workers == 1 or len(chunks) == 1:
        parts = [_row_block(rows, theta, kernel, diagonal_value, diagonal) for rows in chunks]
    else:
        parts = Parallel(n_jobs=settings.workers, prefer="threads")(
            delayed(_row_block)(rows, theta, kernel, diagonal_value, diagonal) for rows in chunks)
    row_sums = np.concatenate(parts)
    if not np.all(np.isfinite(row_sums)):
        i = int(np.argmax(~np.isfinite(row_sums)))
        raise NonFiniteIntegrand(f"{label} is not finite in row θ={theta[i]:.6g}", [theta[i]])
    return pairwise_sum(row_sums) * (2.0 * np.pi / n) ** 2


def douglas_energy(g: BoundaryData, level: int, diagonal: Diagonal = Diagonal.EXTEND) -> float:
    """
    (1/8π) ∬ (g(η) - g(ξ))^2 / sin^2((ξ - η)/2) dη dξ on 2**level equispaced nodes.

    The integrand extends continuously to the diagonal with value 4 g'(ξ)^2.
    `Diagonal.EXCLUDE` drops the diagonal band instead.
    """
    theta = equispaced(level)
    values = g(theta)
    diag = 4.0 * g.derivative(theta) ** 2

    def kernel(i, j):
        return (values[i] - values[j]) ** 2 / np.sin(0.5 * (theta[i] - theta[j])) ** 2

    return _double_sum(theta, kernel, diag, Diagonal(diagonal), "Douglas integrand") / (8.0 * np.pi)


def douglas_fourier(g: BoundaryData) -> float:
    """π Σ k (a_k^2 + b_k^2)."""
    _, modes = fourier_coefficients(g)
    return math.pi * sum(k * (a * a + b * b) for k, a, b in modes)


def feller_kernel(z: np.ndarray, w: np.ndarray) -> np.ndarray:
    """γ(z, w) = 1 / (π |z - w|^2) on the unit circle."""
    diff = np.asarray(z) - np.asarray(w)
    return 1.0 / (np.pi * np.sum(diff * diff, axis=-1))


def feller_form(g: BoundaryData, p: float, level: int, diagonal: Diagonal = Diagonal.EXTEND) -> float:
    """
    (p/2) ∬ (g^<p-1>(z) - g^<p-1>(w)) (g(z) - g(w)) γ(z, w) dσ dσ.

    With |z - w|^2 = 4 sin^2((θ - φ)/2) the diagonal limit is
    (p-1) |g|^(p-2) g'^2 / π.
    """
    if p < 2.0:
        raise DomainError(f"The Sobolev-Bregman form needs p >= 2, got {p}")
    theta = equispaced(level)
    values = g(theta)
    powered = signed_power(values, p - 1.0)
    slope = g.derivative(theta)
    with np.errstate(all="ignore"):
        diag = (p - 1.0) * np.where(values == 0.0, 0.0 if p > 2.0 else 1.0, np.abs(values) ** (p - 2.0)) \
            * slope ** 2 / np.pi

    def kernel(i, j):
        chord2 = 4.0 * np.sin(0.5 * (theta[i] - theta[j])) ** 2
        return (powered[i] - powered[j]) * (values[i] - values[j]) / (np.pi * chord2)

    return 0.5 * p * _double_sum(theta, kernel, diag, Diagonal(diagonal), "Sobolev-Bregman integrand")


# ----------------------
# Poisson extension
# ----------------------

def _series(a0: float, modes: Sequence[Mode], points: np.ndarray) -> np.ndarray:
    r = np.linalg.norm(points, axis=1)
    t = np.arctan2(points[:, 1], points[:, 0])
    out = np.full(r.shape, a0)
    for k, a, b in modes:
        out = out + r ** k * (a * np.cos(k * t) + b * np.sin(k * t))
    return out


def poisson_extend(g: BoundaryData, x: np.ndarray) -> np.ndarray:
    """Poisson integral of g at interior points x of the unit disk (one point or an (m, 2) array)."""
    x = np.asarray(x, dtype=float)
    points = np.atleast_2d(x)
    if points.shape[1] != 2:
        raise DomainError(f"Points must be two-dimensional, got shape {x.shape}")
    if np.any(np.linalg.norm(points, axis=1) >= 1.0):
        raise DomainError("poisson_extend needs |x| < 1")
    a0, modes = fourier_coefficients(g)
    values = _series(a0, modes, points)
    return float(values[0]) if x.ndim == 1 else values


def harmonic_extension(g: BoundaryData, max_modes: int = MAX_EXTENSION_MODES) -> TestFunction:
    """The Poisson extension as a closed-form harmonic test function."""
    a0, modes = fourier_coefficients(g)
    if len(modes) > max_modes:
        logger.warning(f"▲ keeping the first {max_modes} of {len(modes)} Fourier modes of {g.label}")
        modes = sorted(modes)[:max_modes]
    return harmonic_series(modes, a0)


def dirichlet_energy(g: BoundaryData, level: int = 6) -> float:
    """∫ ||∇u||^2 over the unit disk for u the harmonic extension of g."""
    u = harmonic_extension(g)
    rule = interior_rule(Domain.unit_ball(2), level)

    def integrand(points):
        grad = u.gradient(points)
        return np.einsum("mi,mi->m", grad, grad)

    return integrate(integrand, rule, "Dirichlet energy")


def rotation_defect(g: BoundaryData, phi: float, level: int) -> float:
    return abs(douglas_energy(g.rotated(phi), level) - douglas_energy(g, level))


# ----------------------
# Checks
# ----------------------

def douglas_study(g: BoundaryData, levels: Sequence[int] = DEFAULT_LEVELS, tol: float = 1e-6,
                  diagonal: Diagonal = Diagonal.EXTEND, dirichlet_level: int = 6) -> DouglasReport:
    """Douglas energy under refinement against its Fourier form and the Dirichlet energy of the extension."""
    values = []
    notes = []
    for level in levels:
        try:
            values.append(douglas_energy(g, level, diagonal))
        except NonFiniteIntegrand as e:
            values.append(float("inf"))
            notes.append(str(e))
    verdict, _ = convergence_verdict(values, tol)
    fourier = douglas_fourier(g)
    dirichlet = dirichlet_energy(g, dirichlet_level)
    last = values[-1]
    scale = max(1.0, abs(fourier))
    converged = verdict is Verdict.CONVERGED
    holds = converged and abs(last - fourier) <= tol * scale and abs(dirichlet - fourier) <= tol * scale
    if verdict is Verdict.DIVERGED:
        notes.append("Douglas energy diverges under refinement")
    report = DouglasReport(levels=list(levels), values=values, fourier=fourier, dirichlet=dirichlet,
                           verdict=verdict.value, converged=converged, holds=holds, tolerance=tol,
                           notes=[f"g = {g.label}", f"diagonal: {Diagonal(diagonal).value}", *notes])
    logger.info(f"{'✓' if holds else '✗'} douglas: {last:.12g} (Fourier {fourier:.12g}, Dirichlet {dirichlet:.12g})")
    return report


def _is_harmonic(u: TestFunction, rule_nodes: np.ndarray, tol: float = 1e-10) -> bool:
    hess = u.hessian(rule_nodes)
    lap = np.trace(hess, axis1=1, axis2=2)
    scale = max(1.0, float(np.max(np.abs(hess))))
    return float(np.max(np.abs(lap))) <= tol * scale


def theta_representation_check(u: TestFunction, p: float = 2.0, levels: Sequence[int] = (5, 6, 7),
                               tol: float = 1e-4) -> RepresentationReport:
    """
    Θ = ∮ n^T ∇(u^<p>) dσ against the boundary-only representation

        (p/2) ∬ (u^<p-1>(z) - u^<p-1>(w)) (u(z) - u(w)) γ(z, w) + (p/2) ∫ Δu P[u^<p-1>].

    For non-harmonic u a mismatch is reported as a finding, not a failure.
    """
    if p < 2.0:
        raise DomainError(f"The representation needs p >= 2, got {p}")
    disk = Domain.unit_ball(2)
    trace = BoundaryData.trace_of(u)
    powered = BoundaryData.from_callable(lambda t: signed_power(trace(t), p - 1.0), f"trace^<{p - 1:g}>")
    a0, modes = fourier_coefficients(powered)

    directs, reps, bregmans, laps = [], [], [], []
    for level in levels:
        brule = boundary_rule(disk, level)
        values, grad, _ = u.jet(brule.nodes)
        flux = p * signed_power(values, p - 1.0) * np.einsum("mi,mi->m", grad, brule.normals)
        directs.append(integrate_values(flux, brule, "Θ"))

        bregman = feller_form(trace, p, level + 2)
        rule = interior_rule(disk, level)
        lap = np.trace(u.hessian(rule.nodes), axis1=1, axis2=2)
        lap_term = 0.5 * p * integrate_values(lap * _series(a0, modes, rule.nodes), rule, "Δu P[u^<p-1>]")
        bregmans.append(bregman)
        laps.append(lap_term)
        reps.append(bregman + lap_term)

    direct, rep = directs[-1], reps[-1]
    gap = abs(direct - rep) / max(1.0, abs(direct), abs(rep))
    harmonic = _is_harmonic(u, interior_rule(disk, levels[0]).nodes)
    stable = all(convergence_verdict(v, tol)[0] is not Verdict.DIVERGED for v in (directs, reps))
    agrees = stable and gap <= tol
    finding = not agrees and not harmonic
    notes = [] if harmonic else ["Δu does not vanish: agreement is not guaranteed"]
    if finding:
        notes.append(f"representation differs from Θ by {gap:.3e} (relative) for non-harmonic u")
    report = RepresentationReport(
        p=p, theta_direct=direct, sobolev_bregman=bregmans[-1], laplacian_term=laps[-1], representation=rep,
        relative_gap=gap, harmonic=harmonic, finding=finding, applicable=not finding, holds=agrees,
        tolerance=tol, levels=list(levels), notes=notes,
    )
    marker = "✓" if agrees else ("▲" if finding else "✗")
    logger.info(f"{marker} theta-representation: Θ={direct:.10g}, representation={rep:.10g}, gap {gap:.3e}")
    return report
