"""
Model domains (ball, box) with graded interior quadrature, boundary quadrature
with outer normals, deterministic chunked integration, Poincare bounds and
shell averages for boundary traces.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.special import gamma as gamma_fn
from scipy.special import roots_jacobi, roots_legendre
from scipy.stats import qmc

from sobolev_lab.errors import ConstructionError, DomainError, NonFiniteIntegrand
from sobolev_lab.settings import get_settings

logger = logging.getLogger(__name__)

POINCARE_PROVENANCE = "upper bound, slicing"
DEFAULT_GRADING = 3.0


class DomainKind(str, Enum):
    BALL = "ball"
    BOX = "box"


@dataclass(frozen=True)
class Domain:
    kind: DomainKind
    dimension: int
    center: Tuple[float, ...] = ()
    radius: float = 1.0
    lo: Tuple[float, ...] = ()
    hi: Tuple[float, ...] = ()

    @classmethod
    def ball(cls, center: Sequence[float] = (0.0, 0.0), radius: float = 1.0) -> "Domain":
        center = tuple(float(c) for c in center)
        if len(center) < 2:
            raise ConstructionError("Domains need dimension n >= 2")
        if not radius > 0.0:
            raise ConstructionError(f"Ball radius must be positive, got {radius}")
        return cls(DomainKind.BALL, len(center), center=center, radius=float(radius))

    @classmethod
    def unit_ball(cls, dimension: int = 2) -> "Domain":
        return cls.ball((0.0,) * dimension, 1.0)

    @classmethod
    def box(cls, lo: Sequence[float], hi: Sequence[float]) -> "Domain":
        lo, hi = tuple(float(v) for v in lo), tuple(float(v) for v in hi)
        if len(lo) != len(hi) or len(lo) < 2:
            raise ConstructionError("Box corners must have the same dimension n >= 2")
        if any(b <= a for a, b in zip(lo, hi)):
            raise ConstructionError(f"Box corners {lo} / {hi} are not ordered")
        return cls(DomainKind.BOX, len(lo), lo=lo, hi=hi)

    def describe(self) -> str:
        if self.kind is DomainKind.BALL:
            return f"ball(center={list(self.center)}, R={self.radius:g})"
        return f"box({list(self.lo)}, {list(self.hi)})"

    # -- measures --

    def measure(self) -> float:
        if self.kind is DomainKind.BALL:
            n = self.dimension
            return math.pi ** (n / 2) / gamma_fn(n / 2 + 1) * self.radius ** n
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def boundary_measure(self) -> float:
        if self.kind is DomainKind.BALL:
            n = self.dimension
            return n * math.pi ** (n / 2) / gamma_fn(n / 2 + 1) * self.radius ** (n - 1)
        widths = np.subtract(self.hi, self.lo)
        return float(sum(2.0 * np.prod(np.delete(widths, k)) for k in range(self.dimension)))

    # -- point predicates --

    def contains(self, points: np.ndarray, closed: bool = False) -> np.ndarray:
        points = np.atleast_2d(points)
        if self.kind is DomainKind.BALL:
            d = np.linalg.norm(points - np.asarray(self.center), axis=1)
            return d <= self.radius if closed else d < self.radius
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        if closed:
            return np.all((points >= lo) & (points <= hi), axis=1)
        return np.all((points > lo) & (points < hi), axis=1)

    def project(self, x: np.ndarray) -> np.ndarray:
        """Nearest point of the closed domain."""
        x = np.asarray(x, dtype=float)
        if self.kind is DomainKind.BALL:
            c = np.asarray(self.center)
            d = np.linalg.norm(x - c)
            return x if d <= self.radius else c + (x - c) * (self.radius / d)
        return np.clip(x, self.lo, self.hi)

    def distance_to_boundary(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        if self.kind is DomainKind.BALL:
            return self.radius - np.linalg.norm(points - np.asarray(self.center), axis=1)
        return np.min(np.minimum(points - np.asarray(self.lo), np.asarray(self.hi) - points), axis=1)

    def shrink(self, fraction: float) -> "Domain":
        """Concentric copy scaled by (1 - fraction)."""
        if self.kind is DomainKind.BALL:
            return Domain.ball(self.center, self.radius * (1.0 - fraction))
        mid = 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))
        half = 0.5 * (np.asarray(self.hi) - np.asarray(self.lo)) * (1.0 - fraction)
        return Domain.box(mid - half, mid + half)

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        if self.kind is DomainKind.BALL:
            c = np.asarray(self.center)
            return c - self.radius, c + self.radius
        return np.asarray(self.lo), np.asarray(self.hi)

    def sample_points(self, n_samples: int, seed: Optional[int] = None, include_boundary: bool = True) -> np.ndarray:
        """
        Quasi-random points of the closed domain: a scrambled Sobol sequence kept
        inside the domain, plus box corners or boundary nodes.
        """
        seed = get_settings().seed if seed is None else seed
        lo, hi = self.bounding_box()
        sampler = qmc.Sobol(d=self.dimension, scramble=True, seed=seed)
        oversample = 1 if self.kind is DomainKind.BOX else int(math.ceil(1.0 / (self.measure() / np.prod(hi - lo)))) + 1
        m = 1 << int(math.ceil(math.log2(max(2, n_samples * oversample))))
        raw = qmc.scale(sampler.random(m), lo, hi)
        interior = raw[self.contains(raw, closed=True)][:n_samples]
        if not include_boundary:
            return interior
        extra = boundary_rule(self, 2).nodes
        if self.kind is DomainKind.BOX:
            corners = np.array(np.meshgrid(*zip(self.lo, self.hi), indexing="ij")).reshape(self.dimension, -1).T
            extra = np.vstack([extra, corners])
        return np.vstack([interior, extra])


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    level: int
    grading: float = 1.0
    normals: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return int(self.weights.size)

    def total_weight(self) -> float:
        return pairwise_sum(self.weights)


# ----------------------
# One-dimensional building blocks
# ----------------------

def _legendre_01(npts: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = roots_legendre(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def _graded_axis(npts: int, q: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Nodes/weights on (0,1) graded towards both ends: each half is mapped by
    t -> (2t)**q / 2, composite Gauss-Legendre per half.
    """
    if q == 1.0:
        return _legendre_01(npts)
    half = max(1, npts // 2)
    t, w = _legendre_01(half)
    left = 0.5 * t ** q
    left_w = 0.5 * q * t ** (q - 1.0) * w
    nodes = np.concatenate([left, 1.0 - left[::-1]])
    weights = np.concatenate([left_w, left_w[::-1]])
    return nodes, weights


def _radial(npts: int, q: float, R: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Radial nodes r = R(1 - (1-t)**q) with weights r**(n-1) dr."""
    t, w = _legendre_01(npts)
    r = R * (1.0 - (1.0 - t) ** q)
    dr = R * q * (1.0 - t) ** (q - 1.0) * w
    return r, dr * r ** (n - 1)


def _sphere(n: int, level: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Product rule on the unit sphere S^{n-1}: Gauss-Jacobi in the polar angles
    (weight sin^m), equispaced in the last azimuth.
    """
    n_az = 1 << (level + 2)
    az = 2.0 * math.pi * np.arange(n_az) / n_az
    dirs = np.stack([np.cos(az), np.sin(az)], axis=1)
    weights = np.full(n_az, 2.0 * math.pi / n_az)
    n_polar = 1 << (level + 1)
    for m in range(1, n - 1):
        # next polar angle carries the weight sin^m(theta); substitute c = cos(theta)
        a = 0.5 * (m - 1)
        c, wc = roots_jacobi(n_polar, a, a)
        sin = np.sqrt(1.0 - c * c)
        dirs = np.concatenate([np.repeat(c[:, None], dirs.shape[0], axis=0),
                               np.kron(sin[:, None], dirs)], axis=1)
        weights = np.kron(wc, weights)
    return dirs, weights


# ----------------------
# Rules
# ----------------------

def auto_grading(boundary_exponent: Optional[float]) -> float:
    """q = ceil(2/(1+gamma)) clamped to [1, 8]; the default 3 without a predicted exponent."""
    if boundary_exponent is None or boundary_exponent <= -1.0:
        return DEFAULT_GRADING
    return float(min(8, max(1, math.ceil(2.0 / (1.0 + boundary_exponent)))))


def interior_rule(domain: Domain, level: int, grading: float = 1.0) -> QuadratureRule:
    """
    Tensor Gauss-Legendre on boxes, radial x spherical product on balls. Both
    use 2**(level+1) nodes per radial/axial direction; `grading` concentrates
    nodes towards the boundary.
    """
    if level < 1 or grading < 1.0:
        raise DomainError(f"Need level >= 1 and grading >= 1, got level={level}, grading={grading}")
    npts = 1 << (level + 1)
    n = domain.dimension
    if domain.kind is DomainKind.BOX:
        axes = [_graded_axis(npts, grading) for _ in range(n)]
        grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
        wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
        lo, hi = np.asarray(domain.lo), np.asarray(domain.hi)
        unit = np.stack([g.ravel() for g in grids], axis=1)
        nodes = lo + unit * (hi - lo)
        weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1) * np.prod(hi - lo)
        return QuadratureRule(nodes, weights, level, grading)

    r, wr = _radial(npts, grading, domain.radius, n)
    dirs, wd = _sphere(n, level)
    nodes = np.asarray(domain.center) + np.kron(r[:, None], dirs)
    weights = np.kron(wr, wd)
    return QuadratureRule(nodes, weights, level, grading)


def boundary_rule(domain: Domain, level: int) -> QuadratureRule:
    """Boundary nodes with outward unit normals; box edges and corners carry no nodes."""
    if level < 1:
        raise DomainError(f"Need level >= 1, got {level}")
    n = domain.dimension
    if domain.kind is DomainKind.BALL:
        dirs, wd = _sphere(n, level)
        nodes = np.asarray(domain.center) + domain.radius * dirs
        return QuadratureRule(nodes, wd * domain.radius ** (n - 1), level, 1.0, normals=dirs.copy())

    npts = 1 << (level + 1)
    lo, hi = np.asarray(domain.lo), np.asarray(domain.hi)
    t, w = _legendre_01(npts)
    nodes, weights, normals = [], [], []
    for k in range(n):
        others = [j for j in range(n) if j != k]
        grids = np.meshgrid(*([t] * (n - 1)), indexing="ij")
        wgrids = np.meshgrid(*([w] * (n - 1)), indexing="ij")
        face_w = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1) * np.prod((hi - lo)[others])
        for side, value in ((-1.0, lo[k]), (1.0, hi[k])):
            pts = np.empty((face_w.size, n))
            for idx, j in enumerate(others):
                pts[:, j] = lo[j] + grids[idx].ravel() * (hi[j] - lo[j])
            pts[:, k] = value
            normal = np.zeros((face_w.size, n))
            normal[:, k] = side
            nodes.append(pts)
            weights.append(face_w)
            normals.append(normal)
    return QuadratureRule(np.vstack(nodes), np.concatenate(weights), level, 1.0, normals=np.vstack(normals))


# ----------------------
# Integration
# ----------------------

def pairwise_sum(values: np.ndarray) -> float:
    """Fixed-tree pairwise sum; the order depends only on the array length."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0.0
    while values.size > 1:
        if values.size % 2:
            values = np.append(values, 0.0)
        values = values[0::2] + values[1::2]
    return float(values[0])


def _chunk_values(f: Callable[[np.ndarray], np.ndarray], nodes: np.ndarray) -> np.ndarray:
    return np.broadcast_to(np.asarray(f(nodes), dtype=float).reshape(-1), (nodes.shape[0],))


def integrate(f: Callable[[np.ndarray], np.ndarray], rule: QuadratureRule, label: str = "integrand",
              workers: Optional[int] = None, chunk_size: Optional[int] = None) -> float:
    """
    Sum of f(node) * weight over the rule. Nodes are split into fixed-size chunks
    which joblib threads evaluate; chunk sums are reduced with the same pairwise
    tree whatever the worker count.
    """
    settings = get_settings()
    workers = workers or settings.workers
    chunk_size = chunk_size or settings.chunk_size
    chunks = [rule.nodes[i:i + chunk_size] for i in range(0, rule.size, chunk_size)]
    if workers == 1 or len(chunks) == 1:
        parts = [_chunk_values(f, c) for c in chunks]
    else:
        parts = Parallel(n_jobs=workers, prefer="threads")(delayed(_chunk_values)(f, c) for c in chunks)
    values = np.concatenate(parts) if parts else np.zeros(0)
    return integrate_values(values, rule, label, chunk_size)


def integrate_values(values: np.ndarray, rule: QuadratureRule, label: str = "integrand",
                     chunk_size: Optional[int] = None) -> float:
    """Like `integrate` for integrand values already evaluated at the rule's nodes."""
    values = np.asarray(values, dtype=float).reshape(-1)
    bad = ~np.isfinite(values)
    if np.any(bad):
        i = int(np.argmax(bad))
        node = rule.nodes[i]
        logger.debug(f"✗ {label} is {values[i]} at node {node.tolist()}")
        raise NonFiniteIntegrand(f"{label} is not finite ({values[i]}) at node {node.tolist()}", node)
    chunk_size = chunk_size or get_settings().chunk_size
    products = values * rule.weights
    partial = [pairwise_sum(products[i:i + chunk_size]) for i in range(0, products.size, chunk_size)]
    return pairwise_sum(np.asarray(partial))


def boundary_trace(f: Callable[[np.ndarray, np.ndarray], np.ndarray], rule: QuadratureRule, depth: int = 14) -> np.ndarray:
    """
    Values of f(nodes, normals) at boundary nodes. Where f is not finite on the boundary itself,
    the value is replaced by the limit along the inward normal, read off
    f(x - t n) at t = 2**-k with Aitken extrapolation.
    """
    values = np.asarray(f(rule.nodes, rule.normals), dtype=float).reshape(-1)
    bad = np.nonzero(~np.isfinite(values))[0]
    if bad.size == 0:
        return values
    x, normal = rule.nodes[bad], rule.normals[bad]
    steps = 2.0 ** -np.arange(4, 4 + depth)
    seq = np.stack([np.asarray(f(x - t * normal, normal), dtype=float).reshape(-1) for t in steps], axis=1)
    with np.errstate(all="ignore"):
        a, b, c = seq[:, -3], seq[:, -2], seq[:, -1]
        denom = c - 2.0 * b + a
        aitken = np.where(np.abs(denom) > 1e-300, c - (c - b) ** 2 / denom, c)
        diverging = np.abs(c) > 1e6 * np.maximum(1.0, np.abs(a))
    values[bad] = np.where(diverging, np.sign(c) * np.inf, aitken)
    logger.debug(f"▲ {bad.size} boundary node(s) evaluated by inward-normal limits")
    return values


# ----------------------
# Constants and traces
# ----------------------

def poincare_constant(domain: Domain) -> float:
    """One-dimensional slicing bound: half the smallest width of a box, R for a ball."""
    if domain.kind is DomainKind.BALL:
        return domain.radius
    return 0.5 * float(np.min(np.subtract(domain.hi, domain.lo)))


def shell_average(u: Callable[[np.ndarray], np.ndarray], domain: Domain, x: Sequence[float],
                  radii: Sequence[float], level: int = 5) -> List[float]:
    """Mean of u over domain ∩ B(x, r) for each r, by a masked local ball rule."""
    x = np.asarray(x, dtype=float)
    radii = [float(r) for r in radii]
    if any(r <= 0.0 for r in radii) or any(b >= a for a, b in zip(radii, radii[1:])):
        raise DomainError(f"Radii must be positive and decreasing, got {radii}")
    averages = []
    for r in radii:
        local = interior_rule(Domain.ball(x, r), level, 1.0)
        inside = domain.contains(local.nodes)
        if not np.any(inside):
            raise DomainError(f"Domain ∩ B({x.tolist()}, {r:g}) carries no quadrature nodes")
        w = local.weights[inside]
        vals = np.asarray(u(local.nodes[inside]), dtype=float)
        averages.append(pairwise_sum(vals * w) / pairwise_sum(w))
    return averages


# ----------------------
# Refinement verdicts
# ----------------------

class Verdict(str, Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"
    UNDECIDED = "undecided"


def convergence_verdict(values: Sequence[float], tol: float = 1e-8) -> Tuple[Verdict, float]:
    """
    Classify a sequence of per-level quadrature values. Converged when three
    successive levels agree within tol (relative to max(1, |value|)); diverged
    on a non-finite value or on increments that do not shrink.

    Returns the verdict and the last increment.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return Verdict.UNDECIDED, float("nan")
    if not np.all(np.isfinite(values)):
        return Verdict.DIVERGED, float("inf")
    if values.size < 2:
        return Verdict.UNDECIDED, float("nan")
    inc = np.diff(values)
    last = float(abs(inc[-1]))
    scale = max(1.0, abs(values[-1]))
    if values.size >= 3 and np.all(np.abs(inc[-2:]) <= tol * scale):
        return Verdict.CONVERGED, last
    if values.size >= 4:
        tail = np.abs(inc[-3:])
        same_sign = np.all(np.sign(inc[-3:]) == np.sign(inc[-1])) and inc[-1] != 0.0
        if same_sign and np.all(tail[1:] >= 0.95 * tail[:-1]) and last > tol * scale:
            return Verdict.DIVERGED, last
    return Verdict.UNDECIDED, last


def empirical_orders(values: Sequence[float]) -> List[float]:
    """log2(|Δ_{L-1}| / |Δ_L|) for successive increments; nan where undefined."""
    inc = np.abs(np.diff(np.asarray(values, dtype=float)))
    orders = [float("nan")]
    for prev, cur in zip(inc[:-1], inc[1:]):
        orders.append(float(np.log2(prev / cur)) if prev > 0 and cur > 0 else float("nan"))
    return orders
