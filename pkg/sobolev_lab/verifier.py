"""
Term-by-term evaluation of the weighted identity

    ∫ h(u) ||∇u||_A^2 = -∫ Pu H(u) - ∫ div A · ∇u H(u) + ∮ n^T A ∇H~(u) dσ

and of the inequalities, Opial-type bounds and auxiliary properties derived
from it. Every integral over Ω runs over Ω ∩ {0 < u < B}. Hypotheses are
advisory: checks report what was verified, assumed or violated instead of
refusing to run.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from sobolev_lab.errors import ConstructionError, DomainError, EllipticityViolation, NonFiniteIntegrand
from sobolev_lab.expressions import ClosedForm
from sobolev_lab.geometry import (POINCARE_PROVENANCE, Domain, QuadratureRule, Verdict, auto_grading,
                                  boundary_rule, boundary_trace, convergence_verdict, integrate_values,
                                  interior_rule, poincare_constant, shell_average)
from sobolev_lab.models import (Constant, Diagnostic, Hypothesis, IdentityReport, InequalityReport, LevelTerms,
                                Status, ToleranceReport, TraceReport)
from sobolev_lab.operator import Estimate, MatrixField, divergence_data, ellipticity_constants
from sobolev_lab.settings import get_settings
from sobolev_lab.testfn import TestFunction, fd_derivatives, value_range
from sobolev_lab.weights import WeightTriple

logger = logging.getLogger(__name__)

SMOOTH_TOL = 1e-6
SINGULAR_TOL = 1e-3
TRACE_TOL = 1e-2
DEFAULT_LEVELS = (3, 4, 5)
DEFAULT_RADII = (0.2, 0.1, 0.05, 0.025, 0.0125)
POINTWISE_MARGIN = 100.0


def default_tolerance(boundary_exponent: Optional[float]) -> float:
    return SINGULAR_TOL if boundary_exponent is not None else SMOOTH_TOL


def _grading(grading: Optional[float], boundary_exponent: Optional[float]) -> float:
    return auto_grading(boundary_exponent) if grading is None else float(grading)


def _constant(estimate: Estimate) -> Constant:
    return Constant(value=estimate.value, provenance=estimate.provenance)


# ----------------------
# Per-level integrals
# ----------------------

@dataclass(frozen=True)
class _Composed:
    """u and the weight triple composed with it at a set of points; zero off {0 < u < B}."""

    chi: np.ndarray
    u: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    h: np.ndarray
    H: np.ndarray
    Ht: np.ndarray


def _compose(u: TestFunction, w: WeightTriple, points: np.ndarray) -> _Composed:
    value, grad, hess = u.jet(points)
    chi = (value > 0.0) & (value < w.B)
    h, H, Ht = np.zeros_like(value), np.zeros_like(value), np.zeros_like(value)
    if np.any(chi):
        h[chi], H[chi], Ht[chi] = w.evaluate(value[chi])
    return _Composed(chi, value, grad, hess, h, H, Ht)


def _masked(chi: np.ndarray, values: np.ndarray) -> np.ndarray:
    with np.errstate(all="ignore"):
        return np.where(chi, values, 0.0)


def _safe_integral(values: np.ndarray, rule: QuadratureRule, label: str, failures: List[str]) -> float:
    try:
        return integrate_values(values, rule, label)
    except NonFiniteIntegrand as e:
        failures.append(str(e))
        return float("nan")


def _boundary_integrand(u: TestFunction, w: WeightTriple, A: MatrixField, kind: str):
    """n^T A ∇H~(u) (kind 'theta') or H~(u) div A · n (kind 'divA')."""

    def f(points: np.ndarray, normals: np.ndarray) -> np.ndarray:
        c = _compose(u, w, points)
        with np.errstate(all="ignore"):
            if kind == "theta":
                flux = np.einsum("mi,mij,mj->m", normals, A.at(points), c.grad) * c.H
            else:
                flux = np.einsum("mi,mi->m", A.divA_at(points), normals) * c.Ht
        # the restricted form vanishes where u is finite but outside (0, B)
        return np.where(np.isfinite(c.u) & ~c.chi, 0.0, flux)

    return f


@lru_cache(maxsize=128)
def _level_integrals(u: TestFunction, w: WeightTriple, A: MatrixField, domain: Domain, level: int,
                     grading: float) -> Tuple[Dict[str, float], int, int, Tuple[str, ...]]:
    """
    All interior and boundary integrals a check may need at one refinement level.

    Returns the integrals, the node count, the number of interior nodes where u
    leaves (0, B) and the non-finite integrand messages.
    """
    rule = interior_rule(domain, level, grading)
    nodes = rule.nodes
    c = _compose(u, w, nodes)
    A_at = A.at(nodes)
    with np.errstate(all="ignore"):
        A_grad = np.einsum("mij,mj->mi", A_at, c.grad)
        norm_A2 = np.einsum("mi,mi->m", c.grad, A_grad)
        Pu = np.einsum("mij,mij->m", A_at, c.hess)
        div_grad = np.einsum("mi,mi->m", A.divA_at(nodes), c.grad)
        grad_norm2 = np.einsum("mi,mi->m", c.grad, c.grad)
        hess_Ht = (c.h[:, None, None] * np.einsum("mi,mj->mij", c.grad, c.grad)
                   + c.H[:, None, None] * c.hess)
        integrands = {
            "I2": c.h * norm_A2,
            "JP": -Pu * c.H,
            "Jdiv": -div_grad * c.H,
            "abs_PH": np.abs(Pu) * np.abs(c.H),
            "gh": c.H * c.H / c.h,
            "P_Ht_abs": np.abs(c.h * norm_A2 + c.H * Pu),
            "hess_Ht": np.sqrt(np.einsum("mij,mij->m", hess_Ht, hess_Ht)),
            "grad_abs_H": np.sqrt(grad_norm2) * np.abs(c.H),
            "dirichlet_h": grad_norm2 * c.h,
            "div2_Ht": A.div2A_at(nodes) * c.Ht,
            "Ht_negative": np.minimum(c.Ht, 0.0),
        }
    failures: List[str] = []
    out = {name: _safe_integral(_masked(c.chi, vals), rule, name, failures) for name, vals in integrands.items()}

    inner = interior_rule(domain.shrink(0.1), level, 1.0)
    hess_u = u.hessian(inner.nodes)
    out["hess_u"] = _safe_integral(np.sqrt(np.einsum("mij,mij->m", hess_u, hess_u)), inner, "hess_u", failures)

    brule = boundary_rule(domain, level)
    for name, kind in (("theta", "theta"), ("bdry_divA_Ht", "divA")):
        values = boundary_trace(_boundary_integrand(u, w, A, kind), brule)
        out[name] = _safe_integral(values, brule, name, failures)

    outside = int(np.count_nonzero(~c.chi))
    return out, rule.size, outside, tuple(failures)


def _collect(u, w, A, domain, levels: Sequence[int], grading: float):
    return [(level, *_level_integrals(u, w, A, domain, level, grading)) for level in levels]


# ----------------------
# Θ and the identity
# ----------------------

def compute_theta(u: TestFunction, w: WeightTriple, A: MatrixField, domain: Domain, level: int) -> float:
    """Boundary quadrature of n^T A H(u) ∇u; nan when the integrand has no finite trace."""
    brule = boundary_rule(domain, level)
    values = boundary_trace(_boundary_integrand(u, w, A, "theta"), brule)
    try:
        return integrate_values(values, brule, "theta")
    except NonFiniteIntegrand as e:
        logger.warning(f"▲ Θ is not applicable: {e}")
        return float("nan")


def _relative(I2: float, JP: float, Jdiv: float, theta: float) -> Tuple[float, float]:
    residual = I2 - (JP + Jdiv + theta)
    scale = max(1.0, abs(I2), abs(JP) + abs(Jdiv) + abs(theta))
    return residual, abs(residual) / scale


def _diagnostic(values: List[float], tol: float) -> Diagnostic:
    verdict, last = convergence_verdict(values, tol)
    return Diagnostic(values=values, verdict=verdict.value, last_increment=last)


def verify_identity(u: TestFunction, w: WeightTriple, A: MatrixField, domain: Domain,
                    levels: Sequence[int] = DEFAULT_LEVELS, restricted: bool = False,
                    grading: Optional[float] = None, boundary_exponent: Optional[float] = None,
                    tol: Optional[float] = None) -> IdentityReport:
    """
    All four terms of the identity at every level. Converged when the relative
    residual stays below tol at the last three levels with finite terms;
    verified additionally requires that no integrability diagnostic diverges.
    """
    tol = tol if tol is not None else default_tolerance(boundary_exponent)
    q = _grading(grading, boundary_exponent)
    rows = _collect(u, w, A, domain, levels, q)

    level_terms, rel = [], []
    failures: List[str] = []
    for level, ints, nodes, _, fails in rows:
        residual, relative = _relative(ints["I2"], ints["JP"], ints["Jdiv"], ints["theta"])
        rel.append(relative)
        failures.extend(fails)
        level_terms.append(LevelTerms(level=level, nodes=nodes, terms={
            **{k: ints[k] for k in ("I2", "JP", "Jdiv", "theta", "abs_PH", "gh")},
            "residual": residual, "relative_residual": relative,
        }))
    last = rows[-1][1]
    residual, relative = _relative(last["I2"], last["JP"], last["Jdiv"], last["theta"])
    finite = all(math.isfinite(last[k]) for k in ("I2", "JP", "Jdiv", "theta"))
    converged = len(rel) >= 3 and finite and all(r <= tol for r in rel[-3:])

    diagnostics = {
        "hessian_Htilde_u": _diagnostic([r[1]["hess_Ht"] for r in rows], tol),
        "hessian_u_interior": _diagnostic([r[1]["hess_u"] for r in rows], tol),
        "gh": _diagnostic([r[1]["gh"] for r in rows], tol),
    }
    gh_verdict = diagnostics["gh"].verdict
    gh_finite = {Verdict.CONVERGED.value: True, Verdict.DIVERGED.value: False}.get(gh_verdict)

    hypotheses = _identity_hypotheses(u, w, A, domain, rows, restricted, diagnostics)
    violated = [d for d in ("hessian_Htilde_u", "hessian_u_interior")
                if diagnostics[d].verdict == Verdict.DIVERGED.value]
    notes = []
    for name in violated:
        notes.append(f"hypothesis likely violated: {name} diverges under refinement")
    notes.extend(dict.fromkeys(failures))
    verified = converged and not violated

    report = IdentityReport(
        check="identity-restricted" if restricted else "identity",
        term_I2=last["I2"], term_JP=last["JP"], term_Jdiv=last["Jdiv"], theta=last["theta"],
        residual=residual, relative_residual=relative, quadrature_level=rows[-1][0],
        converged=converged, tolerance=tol, abs_PH=last["abs_PH"], gh=last["gh"], gh_finite=gh_finite,
        levels=level_terms, diagnostics=diagnostics, hypotheses=hypotheses, verified=verified, notes=notes,
    )
    marker = "✓" if verified else ("▲" if converged else "✗")
    logger.info(f"{marker} {report.check}: relative residual {relative:.3e} at level {report.quadrature_level} "
                f"({u.describe()}, {w.describe()}, A={A.label})")
    return report


def _identity_hypotheses(u, w, A, domain, rows, restricted, diagnostics) -> List[Hypothesis]:
    hyps = [Hypothesis(name="(Ω) bounded Lipschitz domain", status=Status.VERIFIED, detail=domain.describe())]
    try:
        c_A, C_A = ellipticity_constants(A, domain)
        hyps.append(Hypothesis(name="(A1) uniform ellipticity", status=Status.VERIFIED,
                               detail=f"c_A={c_A.value:.6g}, C_A={C_A.value:.6g} ({c_A.provenance})"))
    except EllipticityViolation as e:
        hyps.append(Hypothesis(name="(A1) uniform ellipticity", status=Status.VIOLATED, detail=str(e)))
    hyps.append(Hypothesis(name="(h) principal weight", status=Status.VERIFIED, detail=w.describe()))

    outside = rows[-1][3]
    if restricted:
        hyps.append(Hypothesis(name="(u-I) u takes values in I", status=Status.ASSUMED,
                               detail=f"I={w.extension_interval()}; {outside} node(s) outside (0, B) are excluded"))
    else:
        status = Status.VERIFIED if outside == 0 else Status.VIOLATED
        hyps.append(Hypothesis(name="(u) u(Ω) ⊂ (0, B)", status=status,
                               detail=f"{outside} interior node(s) outside (0, B)"))

    for name, label in (("hessian_Htilde_u", "H~(u) ∈ W^{2,1}(Ω)"), ("hessian_u_interior", "u ∈ W^{2,1}_loc(Ω)")):
        diverged = diagnostics[name].verdict == Verdict.DIVERGED.value
        hyps.append(Hypothesis(name=label, status=Status.VIOLATED if diverged else Status.NUMERIC,
                               detail=f"refinement verdict: {diagnostics[name].verdict}"))
    last = rows[-1][1]
    both = math.isfinite(last["I2"]) and math.isfinite(last["abs_PH"])
    hyps.append(Hypothesis(name="h(u)||∇u||_A^2 ∈ L^1 ⇔ Pu·H(u) ∈ L^1", status=Status.NUMERIC,
                           detail="both integrals finite" if both else "an integral is not finite"))
    return hyps


# ----------------------
# Inequalities from the identity
# ----------------------

def _holds(lhs: float, rhs: float, tol: float) -> Tuple[float, bool, float]:
    margin = rhs - lhs
    slack = tol * max(1.0, abs(lhs), abs(rhs))
    return margin, bool(np.isfinite(margin) and margin >= -slack), slack


def verify_inequalities(report: IdentityReport, gh: Optional[float] = None,
                        d_A: Optional[Estimate] = None) -> List[InequalityReport]:
    """
    The divergence-free inequality (when d_A = 0), the general inequality with
    the d_A ∫G_H term and the trace-type bound on -Θ.
    """
    gh = report.gh if gh is None else gh
    d_A = d_A or Estimate(0.0, "exact")
    tol = report.tolerance
    I2, abs_PH, theta = report.term_I2, report.abs_PH, report.theta
    gh_ok = report.gh_finite is not False and math.isfinite(gh)
    out = []

    divfree = d_A.value == 0.0
    lhs, rhs = I2, abs_PH + theta
    margin, holds, slack = _holds(lhs, rhs, tol)
    out.append(InequalityReport(
        name="ineq-divfree", lhs=lhs, rhs=rhs, margin=margin, applicable=divfree, holds=holds and divfree,
        tolerance=slack, constants_used={"d_A": _constant(d_A)},
        notes=[] if divfree else ["div A does not vanish; use ineq-general"],
    ))

    gh_term = d_A.value * gh if d_A.value > 0.0 else 0.0
    lhs, rhs = I2, gh_term + 2.0 * abs_PH + 2.0 * theta
    margin, holds, slack = _holds(lhs, rhs, tol)
    notes = []
    informative = True
    if d_A.value > 0.0 and not gh_ok:
        rhs, margin, holds, informative = math.inf, math.inf, True, False
        notes.append("∫G_H(u) diverges: the inequality holds trivially and carries no information")
    out.append(InequalityReport(
        name="ineq-general", lhs=lhs, rhs=rhs, margin=margin, holds=holds, informative=informative,
        tolerance=slack, constants_used={"d_A": _constant(d_A)}, notes=notes,
    ))

    lhs, rhs = -theta, 0.25 * gh_term + abs_PH
    margin, holds, slack = _holds(lhs, rhs, tol)
    notes = []
    informative = True
    if d_A.value > 0.0 and not gh_ok:
        rhs, margin, holds, informative = math.inf, math.inf, True, False
        notes.append("∫G_H(u) diverges: the bound on -Θ is uninformative")
    out.append(InequalityReport(
        name="theta-trace", lhs=lhs, rhs=rhs, margin=margin, holds=holds, informative=informative,
        tolerance=slack, constants_used={"d_A": _constant(d_A)}, notes=notes,
    ))
    for r in out:
        marker = "✓" if r.holds else ("▲" if not r.applicable else "✗")
        logger.info(f"{marker} {r.name}: margin {r.margin:.6g}")
    return out


# ----------------------
# Boundary vanishing of H~(u)
# ----------------------

def _boundary_sample(domain: Domain, count: int) -> np.ndarray:
    nodes = boundary_rule(domain, 1).nodes
    idx = np.linspace(0, nodes.shape[0] - 1, min(count, nodes.shape[0])).round().astype(int)
    return nodes[idx]


def _extrapolate(averages: Sequence[float], radii: Sequence[float]) -> float:
    a0, a1 = averages[-2], averages[-1]
    r0, r1 = radii[-2], radii[-1]
    return a1 + (a1 - a0) * r1 / (r0 - r1)


def htilde_vanishes_on_boundary(u: TestFunction, w: WeightTriple, domain: Domain, samples: int = 8,
                                radii: Sequence[float] = DEFAULT_RADII, tol: float = 1e-3) -> Tuple[bool, str]:
    """Shell averages of H~(u) at sampled boundary points tend to 0."""
    def Ht_of_u(points):
        c = _compose(u, w, points)
        return np.where(c.chi, c.Ht, 0.0)

    worst = 0.0
    for x in _boundary_sample(domain, samples):
        averages = shell_average(Ht_of_u, domain, x, radii)
        if not all(np.isfinite(averages)):
            return False, f"shell averages of H~(u) are not finite at {x.tolist()}"
        worst = max(worst, abs(_extrapolate(averages, radii)))
    interior = np.abs(Ht_of_u(interior_rule(domain, 2, 1.0).nodes))
    scale = max(1.0, float(np.max(interior[np.isfinite(interior)], initial=0.0)))
    ok = worst <= tol * scale
    return ok, f"max |trace of H~(u)| ≈ {worst:.3e}"


# ----------------------
# Sign conditions
# ----------------------

def verify_sign_simplification(u: TestFunction, w: WeightTriple, A: MatrixField, domain: Domain,
                               levels: Sequence[int] = DEFAULT_LEVELS, grading: Optional[float] = None,
                               boundary_exponent: Optional[float] = None,
                               tol: Optional[float] = None) -> InequalityReport:
    """
    Under div^2 A <= 0, H~(u) >= 0 and H~(u) = 0 on the boundary: Θ <= 0, the
    div-term ∫ div A · ∇u H(u) >= 0, and I^2 <= ∫|Pu||H(u)|.
    """
    tol = tol if tol is not None else default_tolerance(boundary_exponent)
    q = _grading(grading, boundary_exponent)
    div = divergence_data(A, domain)
    last = _collect(u, w, A, domain, levels, q)[-1][1]
    I2, abs_PH, theta = last["I2"], last["abs_PH"], last["theta"]
    div_term = -last["Jdiv"]
    scale = max(1.0, abs(I2), abs(abs_PH))
    slack = tol * scale

    notes = []
    failing = []
    if not div.A2_holds:
        failing.append("(A2) div^2 A <= 0 fails on the sample")
    if last["Ht_negative"] < -slack:
        failing.append("H~(u) >= 0 fails")
    vanishes, detail = htilde_vanishes_on_boundary(u, w, domain)
    if not vanishes:
        failing.append(f"H~(u) = 0 on the boundary fails ({detail})")
    applicable = not failing

    # ∫ div A·∇H~(u) = -∫ div^2 A H~(u) + ∮ H~(u) div A·n
    parts = -last["div2_Ht"] + last["bdry_divA_Ht"]
    cross = abs(div_term - parts) / max(1.0, abs(div_term), abs(parts))
    notes.append(f"div-term integration by parts: relative mismatch {cross:.3e}")

    margin, ineq_ok, _ = _holds(I2, abs_PH, tol)
    holds = applicable and ineq_ok and theta <= slack and div_term >= -slack
    notes.extend(failing)
    report = InequalityReport(
        name="sign-simplification", lhs=I2, rhs=abs_PH, margin=margin, applicable=applicable, holds=holds,
        tolerance=slack, notes=notes,
        constants_used={"theta": Constant(value=theta, provenance="quadrature"),
                        "div_term": Constant(value=div_term, provenance="quadrature"),
                        "divA_sup": _constant(div.divA_sup)},
    )
    logger.info(f"{'✓' if holds else ('▲' if not applicable else '✗')} sign-simplification: "
                f"Θ={theta:.6g}, div-term={div_term:.6g}, margin={margin:.6g}")
    return report


# ----------------------
# Opial-type inequalities and Γ, κ
# ----------------------

def ghc_for(u: TestFunction, w: WeightTriple, domain: Domain) -> Optional[float]:
    """C_H~ over the part of (0, B) that u actually takes on the domain."""
    lo, hi = value_range(u, domain)
    lo, hi = max(lo, 0.0), min(hi, w.B)
    if not hi > lo:
        lo, hi = 1e-6, min(1.0, 0.5 * w.B)
    upper = hi if math.isfinite(hi) else 1e12
    lower = max(lo, 1e-12 * max(1.0, upper))
    return w.ghc_constant((lower, upper))


@dataclass(frozen=True)
class _OpialConstants:
    C_P: float
    C_H: Optional[float]
    vanishes: bool
    detail: str


def _opial_constants(u, w, domain) -> _OpialConstants:
    vanishes, detail = htilde_vanishes_on_boundary(u, w, domain)
    return _OpialConstants(poincare_constant(domain), ghc_for(u, w, domain), vanishes, detail)


def verify_opial(u: TestFunction, w: WeightTriple, A: MatrixField, domain: Domain,
                 levels: Sequence[int] = DEFAULT_LEVELS, grading: Optional[float] = None,
                 boundary_exponent: Optional[float] = None, tol: Optional[float] = None) -> List[InequalityReport]:
    """
    ∫G_H(u) <= C_P C_H~ ∫||∇u|| |H(u)|  and  ∫||∇u|| |H(u)| <= (C_P C_H~)^2 ∫||∇u||^2 h(u).
    """
    tol = tol if tol is not None else default_tolerance(boundary_exponent)
    q = _grading(grading, boundary_exponent)
    k = _opial_constants(u, w, domain)
    last = _collect(u, w, A, domain, levels, q)[-1][1]
    applicable = k.vanishes and k.C_H is not None
    notes = [] if k.vanishes else [f"H~(u) does not vanish on the boundary ({k.detail})"]
    if k.C_H is None:
        notes.append("G_H/|H~| is unbounded on the range of u: C_H~ does not exist")
    C = k.C_P * (k.C_H if k.C_H is not None else math.nan)
    constants = {"C_P": Constant(value=k.C_P, provenance=POINCARE_PROVENANCE),
                 "C_Htilde": Constant(value=k.C_H if k.C_H is not None else math.inf,
                                      provenance="empirical sup over log-spaced samples")}
    out = []
    for name, lhs, rhs in (("opial", last["gh"], C * last["grad_abs_H"]),
                           ("opial-dirichlet", last["grad_abs_H"], C * C * last["dirichlet_h"])):
        if not applicable:
            rhs = math.nan
        margin, holds, slack = _holds(lhs, rhs, tol)
        # 0 <= 0 when u leaves (0, B) everywhere
        if applicable and lhs == 0.0 and rhs == 0.0:
            margin, holds = 0.0, True
        out.append(InequalityReport(name=name, lhs=lhs, rhs=rhs, margin=margin, applicable=applicable,
                                    holds=holds and applicable, tolerance=slack, constants_used=constants,
                                    notes=list(notes)))
        logger.info(f"{'✓' if holds else '✗'} {name}: margin {margin:.6g}")
    return out


def simplification_constants(A: MatrixField, domain: Domain, C_P: float, C_H: float) -> Tuple[Constant, Constant]:
    """(Γ, κ) = (C_P^3 C_H~^3 / c_A, ||div A||_∞ C_P^2 C_H~^2 / c_A)."""
    c_A, _ = ellipticity_constants(A, domain)
    div = divergence_data(A, domain, c_A=c_A)
    gamma = C_P ** 3 * C_H ** 3 / c_A.value
    kappa = div.divA_sup.value * C_P ** 2 * C_H ** 2 / c_A.value
    provenance = f"C_P {POINCARE_PROVENANCE}; c_A {c_A.provenance}"
    return (Constant(value=gamma, provenance=provenance),
            Constant(value=kappa, provenance=f"{provenance}; ||div A|| {div.divA_sup.provenance}"))


def verify_simplified(u: TestFunction, w: WeightTriple, A: MatrixField, domain: Domain,
                      levels: Sequence[int] = DEFAULT_LEVELS, grading: Optional[float] = None,
                      boundary_exponent: Optional[float] = None, tol: Optional[float] = None) -> List[InequalityReport]:
    """
    ∫G_H(u) <= Γ I^2 always; I^2 <= (∫|Pu||H(u)| + Θ) / (1 - κ) only when 0 < κ < 1.
    """
    tol = tol if tol is not None else default_tolerance(boundary_exponent)
    q = _grading(grading, boundary_exponent)
    k = _opial_constants(u, w, domain)
    last = _collect(u, w, A, domain, levels, q)[-1][1]
    base_ok = k.vanishes and k.C_H is not None
    notes = [] if k.vanishes else [f"H~(u) does not vanish on the boundary ({k.detail})"]
    if k.C_H is None:
        notes.append("C_H~ does not exist")
        gamma = kappa = Constant(value=math.nan, provenance="undefined")
    else:
        gamma, kappa = simplification_constants(A, domain, k.C_P, k.C_H)
    constants = {"Gamma": gamma, "kappa": kappa,
                 "C_P": Constant(value=k.C_P, provenance=POINCARE_PROVENANCE),
                 "C_Htilde": Constant(value=k.C_H if k.C_H is not None else math.inf,
                                      provenance="empirical sup over log-spaced samples")}

    lhs, rhs = last["gh"], gamma.value * last["I2"]
    margin, holds, slack = _holds(lhs, rhs, tol)
    out = [InequalityReport(name="gh-bound", lhs=lhs, rhs=rhs, margin=margin, applicable=base_ok,
                            holds=holds and base_ok, tolerance=slack, constants_used=constants, notes=list(notes))]

    kappa_ok = base_ok and 0.0 < kappa.value < 1.0
    simplified_notes = list(notes)
    if base_ok and not kappa_ok:
        simplified_notes.append(f"κ={kappa.value:.6g} is not in (0, 1)")
    lhs = last["I2"]
    rhs = (last["abs_PH"] + last["theta"]) / (1.0 - kappa.value) if kappa_ok else math.nan
    margin, holds, slack = _holds(lhs, rhs, tol)
    out.append(InequalityReport(name="simplified", lhs=lhs, rhs=rhs, margin=margin, applicable=kappa_ok,
                                holds=holds and kappa_ok, tolerance=slack, constants_used=constants,
                                notes=simplified_notes))
    for r in out:
        logger.info(f"{'✓' if r.holds else ('▲' if not r.applicable else '✗')} {r.name}: margin {r.margin:.6g}")
    return out


# ----------------------
# Chain-rule bound
# ----------------------

def verify_chain_rule_bound(u: TestFunction, w: WeightTriple, A: MatrixField, domain: Domain,
                            levels: Sequence[int] = DEFAULT_LEVELS, grading: Optional[float] = None,
                            boundary_exponent: Optional[float] = None,
                            tol: Optional[float] = None) -> InequalityReport:
    """
    ∫|P(H~(u))| <= ∫|H(u) Pu| + ∫h(u)||∇u||_A^2, with the effective constant
    ∫|P(H~(u))| / ∫|H(u) Pu| and the bound implied by the sign or κ simplification.
    """
    tol = tol if tol is not None else default_tolerance(boundary_exponent)
    q = _grading(grading, boundary_exponent)
    last = _collect(u, w, A, domain, levels, q)[-1][1]
    lhs, linear, I2 = last["P_Ht_abs"], last["abs_PH"], last["I2"]

    k = _opial_constants(u, w, domain)
    div = divergence_data(A, domain)
    sign_ok = div.A2_holds and k.vanishes and last["Ht_negative"] >= -tol * max(1.0, abs(I2))
    implied, source = math.nan, ""
    if sign_ok:
        implied, source = 2.0, "sign conditions"
    elif k.vanishes and k.C_H is not None:
        _, kappa = simplification_constants(A, domain, k.C_P, k.C_H)
        if 0.0 <= kappa.value < 1.0:
            implied, source = 1.0 + 1.0 / (1.0 - kappa.value), f"κ={kappa.value:.6g}"
    applicable = math.isfinite(implied)

    rhs = linear + I2
    margin, holds, slack = _holds(lhs, rhs, tol)
    effective = lhs / linear if linear > 0.0 else (0.0 if lhs == 0.0 else math.inf)
    notes = [f"implied constant from {source}" if applicable else "neither simplification applies"]
    if applicable and not k.vanishes:
        notes.append("Θ enters the implied bound")
    report = InequalityReport(
        name="chain-rule", lhs=lhs, rhs=rhs, margin=margin, applicable=applicable, holds=holds and applicable,
        tolerance=slack, notes=notes,
        constants_used={"effective": Constant(value=effective, provenance="∫|P(H~(u))| / ∫|H(u)Pu|"),
                        "implied": Constant(value=implied, provenance=source or "undefined")},
    )
    logger.info(f"{'✓' if report.holds else '▲'} chain-rule: effective constant {effective:.6g}")
    return report


# ----------------------
# Metafune-Spina identities
# ----------------------

def verify_metafune_spina(u: TestFunction, p: float, domain: Domain, levels: Sequence[int] = DEFAULT_LEVELS,
                          g: Optional[str] = None, grading: float = 1.0,
                          tol: float = SMOOTH_TOL) -> IdentityReport:
    """
    ∫ u|u|^{p-2} Δu = -(p-1) ∫ |u|^{p-2} ||∇u||^2, or with g given
    ∫ g(u)|g(u)|^{p-2} Δu = -(p-1) ∫ ||∇u||^2 g'(u) |g(u)|^{p-2} χ_{g(u)≠0},
    plus the boundary term ∮ g(u)|g(u)|^{p-2} ∂_n u (zero for compact support).
    """
    if not p > 1.0:
        raise DomainError(f"p must exceed 1, got {p}")
    g_form = None
    if g is not None:
        g_form = ClosedForm.from_text(g, ("s",))
        if abs(float(g_form(0.0))) > 1e-14:
            raise ConstructionError(f"g must vanish at 0, got g(0)={float(g_form(0.0))}")
        dg = g_form.derivative("s")

    def terms(values, grad, hess):
        """(g(u)|g(u)|^{p-2} Δu, (p-1)||∇u||^2 g'(u)|g(u)|^{p-2}, g(u)|g(u)|^{p-2}), zero where g(u) = 0."""
        lap = np.trace(hess, axis1=1, axis2=2)
        grad2 = np.einsum("mi,mi->m", grad, grad)
        gv = values if g_form is None else g_form(values)
        slope = np.ones_like(values) if g_form is None else dg(values)
        nz = gv != 0.0
        with np.errstate(all="ignore"):
            power = np.where(nz, gv * np.abs(gv) ** (p - 2.0), 0.0)
            lhs = power * lap
            rhs = (p - 1.0) * grad2 * slope * np.abs(gv) ** (p - 2.0)
        return np.where(nz, lhs, 0.0), np.where(nz, rhs, 0.0), power

    level_terms, rel = [], []
    failures: List[str] = []
    for level in levels:
        rule = interior_rule(domain, level, grading)
        lhs_vals, rhs_vals, _ = terms(*u.jet(rule.nodes))
        JP = -_safe_integral(lhs_vals, rule, "metafune lhs", failures)
        I2 = _safe_integral(rhs_vals, rule, "metafune rhs", failures)

        brule = boundary_rule(domain, level)
        values, grad, hess = u.jet(brule.nodes)
        _, _, weight = terms(values, grad, hess)
        flux = weight * np.einsum("mi,mi->m", grad, brule.normals)
        theta = _safe_integral(flux, brule, "metafune boundary", failures)
        residual, relative = _relative(I2, JP, 0.0, theta)
        rel.append(relative)
        level_terms.append(LevelTerms(level=level, nodes=rule.size, terms={
            "I2": I2, "JP": JP, "Jdiv": 0.0, "theta": theta, "residual": residual, "relative_residual": relative}))

    t = level_terms[-1].terms
    converged = len(rel) >= min(3, len(levels)) and all(r <= tol for r in rel[-3:]) and all(
        math.isfinite(t[k]) for k in ("I2", "JP", "theta"))
    support_ok = u.support is not None
    hypotheses = [Hypothesis(name="u compactly supported in Ω", status=Status.VERIFIED if support_ok else Status.ASSUMED,
                             detail="bump support" if support_ok else "boundary term kept explicitly")]
    report = IdentityReport(
        check="metafune", term_I2=t["I2"], term_JP=t["JP"], term_Jdiv=0.0, theta=t["theta"],
        residual=t["residual"], relative_residual=t["relative_residual"], quadrature_level=levels[-1],
        converged=converged, tolerance=tol, levels=level_terms, hypotheses=hypotheses,
        verified=converged, notes=[f"p={p}", f"g={g or 's'}", *dict.fromkeys(failures)],
    )
    logger.info(f"{'✓' if converged else '✗'} metafune: relative residual {report.relative_residual:.3e}")
    return report


# ----------------------
# Trace constancy and tangential gradients
# ----------------------

def verify_trace_constancy(u: TestFunction, w: WeightTriple, domain: Domain, boundary_samples: int = 8,
                           radii: Sequence[float] = DEFAULT_RADII, tol: float = TRACE_TOL) -> TraceReport:
    """
    When H~(u) vanishes on the boundary, the boundary trace of u is a single
    constant T in [0, B]; estimated from shell averages at sampled boundary points.
    """
    vanishes, detail = htilde_vanishes_on_boundary(u, w, domain, boundary_samples, radii)
    points = _boundary_sample(domain, boundary_samples)
    averages, limits, diverging = [], [], False
    for x in points:
        a = shell_average(u.value, domain, x, radii)
        averages.append([float(v) for v in a])
        verdict, _ = convergence_verdict(a, tol)
        if verdict is Verdict.DIVERGED:
            diverging = True
        limits.append(_extrapolate(a, radii))

    notes = [] if vanishes else [f"H~(u) does not vanish on the boundary ({detail})"]
    if diverging:
        T, spread, converged = math.inf, 0.0, False
        holds = math.isinf(w.B)
        notes.append("shell averages diverge: T = B = ∞" if holds else "shell averages diverge but B is finite")
    else:
        T = float(np.mean(limits))
        spread = float(np.max(limits) - np.min(limits))
        converged = spread <= tol * max(1.0, abs(T))
        holds = converged and -tol <= T <= w.B + tol
    report = TraceReport(T=T, spread=spread, averages=averages, converged=converged, applicable=vanishes,
                         holds=holds and vanishes, notes=notes)
    logger.info(f"{'✓' if report.holds else '✗'} trace-constancy: T={T:.6g}, spread={spread:.3e}")
    return report


def verify_tangential_gradient(v: TestFunction, domain: Domain, boundary_samples: int = 64,
                               tol: float = 1e-10) -> ToleranceReport:
    """A function vanishing on the boundary has its gradient parallel to the normal there."""
    level = max(1, int(math.ceil(math.log2(max(4, boundary_samples)))) - 2)
    brule = boundary_rule(domain, level)
    values, grad, _ = v.jet(brule.nodes)
    scale = max(1.0, float(np.max(np.abs(grad))))
    on_zero = float(np.max(np.abs(values)))
    applicable = on_zero <= 1e-12 * scale
    normal_part = np.einsum("mi,mi->m", grad, brule.normals)[:, None] * brule.normals
    tangential = float(np.max(np.linalg.norm(grad - normal_part, axis=1)))
    report = ToleranceReport(
        name="tangential-gradient", max_error=tangential, tolerance=tol * scale, n_points=brule.size,
        applicable=applicable, holds=applicable and tangential <= tol * scale,
        values={"max_boundary_value": on_zero},
        notes=[] if applicable else [f"v does not vanish on the boundary (max |v| = {on_zero:.3e})"],
    )
    logger.info(f"{'✓' if report.holds else '✗'} tangential-gradient: max tangential part {tangential:.3e}")
    return report


# ----------------------
# Pointwise identity
# ----------------------

def verify_pointwise(u: TestFunction, w: WeightTriple, A: MatrixField, domain: Domain, n_points: int = 100,
                     step: float = 1e-3, tol: float = 1e-8, seed: Optional[int] = None) -> ToleranceReport:
    """
    P(H~(u)) = h(u)||∇u||_A^2 + H(u) Pu at random interior points, the left side
    by finite differences of H~∘u.
    """
    seed = get_settings().seed if seed is None else seed
    inner = domain.shrink(0.2)
    lo, hi = inner.bounding_box()
    sampler = qmc.Sobol(d=domain.dimension, scramble=True, seed=seed)
    candidates = qmc.scale(sampler.random(1 << 12), lo, hi)
    # stencil truncation grows like (step / distance)**4 near non-smooth points of u
    margin = POINTWISE_MARGIN * step
    keep = inner.contains(candidates) & (u.rough_distance(candidates) > margin)
    candidates = candidates[keep]
    c = _compose(u, w, candidates)
    candidates = candidates[c.chi]

    def Ht_of_u(points):
        composed = _compose(u, w, points)
        return np.where(composed.chi, composed.Ht, np.nan)

    worst, used = 0.0, 0
    for x in candidates:
        if used == n_points:
            break
        _, hess = fd_derivatives(Ht_of_u, x, step, domain)
        if not np.all(np.isfinite(hess)):
            continue
        comp = _compose(u, w, x[None, :])
        A_x = A.at(x[None, :])[0]
        analytic = (comp.h[0] * comp.grad[0] @ A_x @ comp.grad[0]
                    + comp.H[0] * float(np.sum(A_x * comp.hess[0])))
        numeric = float(np.sum(A_x * hess))
        worst = max(worst, abs(numeric - analytic) / (1.0 + abs(analytic)))
        used += 1
    report = ToleranceReport(name="pointwise", max_error=worst, tolerance=tol, n_points=used,
                             applicable=used > 0, holds=used > 0 and worst <= tol,
                             notes=[] if used else ["no interior point with a smooth neighbourhood in {0 < u < B}"])
    logger.info(f"{'✓' if report.holds else '✗'} pointwise: max relative error {worst:.3e} over {used} points")
    return report
