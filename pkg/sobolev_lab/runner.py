"""
Config-driven experiment runner: builds the objects an experiment describes,
runs its checks as independent jobs and assembles the run report in config
order.
"""

import asyncio
import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

import pandas as pd
from pydantic import BaseModel, ValidationError

from sobolev_lab import douglas, testfn, verifier, weights
from sobolev_lab.errors import ConfigError, ConstructionError, ExpressionError
from sobolev_lab.geometry import Domain, Verdict, empirical_orders
from sobolev_lab.models import (CheckRecord, CheckSpec, Constant, DouglasReport, ExperimentConfig, IdentityReport,
                                InequalityReport, LevelTerms, RepresentationReport, RunReport, ToleranceReport,
                                TraceReport)
from sobolev_lab.operator import MatrixField, divergence_data
from sobolev_lab.settings import get_settings
from sobolev_lab.testfn import TestFunction
from sobolev_lab.weights import Normalization, NormalizationKind, WeightTriple

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["check", "level", "nodes", "term", "value"]
STUDY_TERMS = ["I2", "JP", "Jdiv", "theta", "relative_residual"]


# -------------------------
# Building experiment objects
# -------------------------

def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read and validate an experiment file; any problem becomes a ConfigError naming the key."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"{path} not found", "") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}", "") from e
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(part) for part in first["loc"])
        raise ConfigError(f"{path}: {key or '<root>'}: {first['msg']}", key) from e


def build_domain(cfg) -> Domain:
    if cfg.kind == "ball":
        return Domain.ball(cfg.center, cfg.radius)
    return Domain.box(cfg.lo, cfg.hi)


def build_weight(cfg) -> WeightTriple:
    norm = None
    if cfg.normalization is not None:
        norm = Normalization(NormalizationKind(cfg.normalization.kind), cfg.normalization.s0,
                             cfg.normalization.value)
    common = dict(B=cfg.B, offset=cfg.offset, normalization=norm)
    if cfg.family == "power":
        return weights.power_weight(cfg.alpha, **common)
    if cfg.family == "power-log":
        return weights.power_log_weight(cfg.a, cfg.b, **common)
    if cfg.family == "exponential":
        return weights.exponential_weight(cfg.b, cfg.a, **common)
    if cfg.family == "tau-generated":
        return weights.weight_from_tau(cfg.tau, anchor=cfg.anchor, **common)
    return weights.custom_weight(cfg.h, **common)


def build_function(cfg, dimension: int) -> TestFunction:
    if cfg.family == "radial-power":
        return testfn.radial_power(cfg.alpha, dimension, cfg.scale, cfg.shift)
    if cfg.family == "quadratic-radial":
        return testfn.quadratic_radial(cfg.a, cfg.b, dimension, cfg.scale, cfg.shift)
    if cfg.family == "bump":
        return testfn.bump(cfg.k, cfg.center, cfg.radius, dimension, cfg.scale)
    if cfg.family == "signed-power-1d":
        return testfn.signed_power_1d(cfg.epsilon, dimension, cfg.scale, cfg.shift)
    if cfg.family == "harmonic-polynomial":
        return testfn.harmonic_polynomial(cfg.degree, cfg.index, dimension, cfg.scale, cfg.shift)
    if cfg.family == "harmonic-series":
        return testfn.harmonic_series([(m.k, m.a, m.b) for m in cfg.modes], cfg.a0, dimension)
    if cfg.family == "constant":
        return testfn.constant(cfg.c, dimension)
    return testfn.custom(cfg.expression, dimension, cfg.nonnegative)


def build_operator(cfg, dimension: int) -> MatrixField:
    if cfg.kind == "identity":
        return MatrixField.identity(dimension)
    if cfg.kind == "constant":
        return MatrixField.constant(cfg.matrix)
    if cfg.kind == "diagonal-affine":
        return MatrixField.diagonal_affine(cfg.constants, cfg.slopes)
    if cfg.kind == "scalar-profile":
        return MatrixField.scalar_profile(cfg.profile, dimension)
    return MatrixField.custom(cfg.entries)


def build_boundary_data(cfg) -> douglas.BoundaryData:
    if cfg.representation == "closed-form":
        return douglas.BoundaryData.closed_form(cfg.expression)
    return douglas.BoundaryData.trig_polynomial([(m.k, m.a, m.b) for m in cfg.modes], cfg.a0)


@dataclass(frozen=True)
class Experiment:
    config: ExperimentConfig
    domain: Domain
    operator: MatrixField
    weight: Optional[WeightTriple] = None
    function: Optional[TestFunction] = None


def build_experiment(config: ExperimentConfig) -> Experiment:
    parts = {"domain": _as_config_error("domain", lambda: build_domain(config.domain))}
    n = parts["domain"].dimension
    parts["operator"] = _as_config_error("operator", lambda: build_operator(config.operator, n))
    if parts["operator"].dimension != n:
        raise ConfigError(f"operator: dimension {parts['operator'].dimension} does not match the domain ({n})",
                          "operator")
    if config.weight is not None:
        parts["weight"] = _as_config_error("weight", lambda: build_weight(config.weight))
    if config.function is not None:
        parts["function"] = _as_config_error("function", lambda: build_function(config.function, n))
    return Experiment(config=config, **parts)


def _as_config_error(key: str, build: Callable):
    try:
        return build()
    except (ConstructionError, ExpressionError) as e:
        raise ConfigError(f"{key}: {e}", key) from e


# -------------------------
# Check dispatch
# -------------------------

def _identity(exp: Experiment, check: CheckSpec, restricted: Optional[bool] = None) -> IdentityReport:
    cfg = exp.config
    return verifier.verify_identity(
        exp.function, exp.weight, exp.operator, exp.domain, _levels(exp, check),
        restricted=cfg.restricted if restricted is None else restricted, grading=cfg.grading,
        boundary_exponent=cfg.boundary_exponent, tol=_tol(exp, check))


def _levels(exp: Experiment, check: CheckSpec) -> List[int]:
    return check.levels or exp.config.levels


def _tol(exp: Experiment, check: CheckSpec) -> Optional[float]:
    return check.tolerance or exp.config.tolerance


def _common(exp: Experiment, check: CheckSpec) -> dict:
    return dict(levels=_levels(exp, check), grading=exp.config.grading,
                boundary_exponent=exp.config.boundary_exponent, tol=_tol(exp, check))


def _named(reports: List[InequalityReport], name: str) -> List[InequalityReport]:
    return [r for r in reports if r.name == name]


def _run_identity(exp, check):
    restricted = True if check.name == "identity-restricted" else None
    return [_identity(exp, check, restricted)]


def _run_inequality(exp, check):
    report = _identity(exp, check)
    d_A = divergence_data(exp.operator, exp.domain).d_A
    return _named(verifier.verify_inequalities(report, d_A=d_A), check.name)


def _run_sign(exp, check):
    return [verifier.verify_sign_simplification(exp.function, exp.weight, exp.operator, exp.domain,
                                                **_common(exp, check))]


def _run_opial(exp, check):
    return verifier.verify_opial(exp.function, exp.weight, exp.operator, exp.domain, **_common(exp, check))


def _run_simplified(exp, check):
    reports = verifier.verify_simplified(exp.function, exp.weight, exp.operator, exp.domain, **_common(exp, check))
    return _named(reports, check.name)


def _run_chain_rule(exp, check):
    return [verifier.verify_chain_rule_bound(exp.function, exp.weight, exp.operator, exp.domain,
                                             **_common(exp, check))]


def _run_metafune(exp, check):
    return [verifier.verify_metafune_spina(exp.function, check.p or 2.0, exp.domain, _levels(exp, check),
                                           g=check.g, tol=_tol(exp, check) or verifier.SMOOTH_TOL)]


def _run_trace(exp, check):
    return [verifier.verify_trace_constancy(exp.function, exp.weight, exp.domain,
                                            tol=check.tolerance or verifier.TRACE_TOL)]


def _run_tangential(exp, check):
    return [verifier.verify_tangential_gradient(exp.function, exp.domain, tol=check.tolerance or 1e-10)]


def _run_pointwise(exp, check):
    return [verifier.verify_pointwise(exp.function, exp.weight, exp.operator, exp.domain,
                                      tol=check.tolerance or 1e-8)]


def _run_douglas(exp, check):
    g = build_boundary_data(check.boundary_data)
    levels = check.levels or list(douglas.DEFAULT_LEVELS)
    return [douglas.douglas_study(g, levels, tol=check.tolerance or 1e-6)]


def _run_representation(exp, check):
    levels = check.levels or [5, 6, 7]
    return [douglas.theta_representation_check(exp.function, check.p or 2.0, levels, check.tolerance or 1e-4)]


CHECKS: Dict[str, Callable[[Experiment, CheckSpec], list]] = {
    "identity": _run_identity,
    "identity-restricted": _run_identity,
    "ineq-divfree": _run_inequality,
    "ineq-general": _run_inequality,
    "theta-trace": _run_inequality,
    "sign-simplification": _run_sign,
    "opial": _run_opial,
    "gh-bound": _run_simplified,
    "simplified": _run_simplified,
    "chain-rule": _run_chain_rule,
    "metafune": _run_metafune,
    "trace-constancy": _run_trace,
    "tangential-gradient": _run_tangential,
    "pointwise": _run_pointwise,
    "douglas": _run_douglas,
    "theta-representation": _run_representation,
}


# -------------------------
# Records
# -------------------------

def _last_level(exp: Experiment, check: CheckSpec) -> int:
    return _levels(exp, check)[-1]


def to_record(report: BaseModel, check: CheckSpec, level: int) -> CheckRecord:
    """Flatten any check report into a run-report record with (level, term) rows."""
    converged = None
    constants: Dict[str, Constant] = {}
    if isinstance(report, IdentityReport):
        name, applicable, holds, converged = check.name, True, report.verified, report.converged
        rows = report.levels
        diverged = any(d.verdict == Verdict.DIVERGED.value for d in report.diagnostics.values())
    elif isinstance(report, InequalityReport):
        name, applicable, holds = report.name, report.applicable, report.holds
        rows = [LevelTerms(level=level, nodes=0, terms={"lhs": report.lhs, "rhs": report.rhs, "margin": report.margin})]
        constants = report.constants_used
        diverged = not report.informative
    elif isinstance(report, TraceReport):
        name, applicable, holds, converged = report.name, report.applicable, report.holds, report.converged
        rows = [LevelTerms(level=level, nodes=0, terms={"T": report.T, "spread": report.spread})]
        diverged = math.isinf(report.T)
    elif isinstance(report, ToleranceReport):
        name, applicable, holds = report.name, report.applicable, report.holds
        rows = [LevelTerms(level=level, nodes=report.n_points, terms={"max_error": report.max_error, **report.values})]
        diverged = False
    elif isinstance(report, DouglasReport):
        name, applicable, holds, converged = report.name, report.applicable, report.holds, report.converged
        rows = [LevelTerms(level=lv, nodes=1 << (2 * lv), terms={"douglas": v})
                for lv, v in zip(report.levels, report.values)]
        rows[-1].terms.update(fourier=report.fourier, dirichlet=report.dirichlet)
        diverged = report.verdict == Verdict.DIVERGED.value
    elif isinstance(report, RepresentationReport):
        name, applicable, holds = report.name, report.applicable, report.holds
        rows = [LevelTerms(level=report.levels[-1], nodes=0, terms={
            "theta_direct": report.theta_direct, "sobolev_bregman": report.sobolev_bregman,
            "laplacian_term": report.laplacian_term, "representation": report.representation,
            "relative_gap": report.relative_gap})]
        diverged = False
    else:
        raise TypeError(f"Unknown report type {type(report).__name__}")

    if check.expect == "diverge":
        passed = not holds and (diverged or converged is False)
    else:
        passed = holds or not applicable
    return CheckRecord(name=name, applicable=applicable, holds=holds, converged=converged, expect=check.expect,
                       passed=passed, levels=rows, constants=constants, report=report.model_dump())


class CheckRunner:
    """Runs the checks of one experiment concurrently, at most `workers` at a time."""

    def __init__(self, experiment: Experiment, timings: bool = False, workers: Optional[int] = None):
        self.experiment = experiment
        self.timings = timings
        self.semaphore = asyncio.Semaphore(workers or get_settings().workers)

    def run_check(self, check: CheckSpec) -> List[CheckRecord]:
        start = time.perf_counter()
        reports = CHECKS[check.name](self.experiment, check)
        elapsed = time.perf_counter() - start
        records = [to_record(r, check, _last_level(self.experiment, check)) for r in reports]
        if self.timings:
            for record in records:
                record.wall_time = elapsed
        return records

    async def process_check(self, check: CheckSpec) -> List[CheckRecord]:
        async with self.semaphore:
            logger.debug(f"Running check {check.name}")
            return await asyncio.to_thread(self.run_check, check)

    async def process_all(self) -> List[CheckRecord]:
        tasks = [self.process_check(check) for check in self.experiment.config.checks]
        results = await asyncio.gather(*tasks)
        return [record for records in results for record in records]


def run_experiment(experiment: Experiment, timings: bool = False) -> RunReport:
    records = asyncio.run(CheckRunner(experiment, timings).process_all())
    verdict = "pass" if all(r.passed for r in records) else "fail"
    report = RunReport(config=experiment.config.name, checks=records, verdict=verdict)
    marker = "✓" if verdict == "pass" else "✗"
    logger.info(f"{marker} {experiment.config.name}: {sum(r.passed for r in records)}/{len(records)} checks passed")
    return report


def run_config(path: Union[str, Path], timings: bool = False) -> RunReport:
    return run_experiment(build_experiment(load_config(path)), timings)


# -------------------------
# Reports and studies
# -------------------------

def report_rows(report: RunReport) -> pd.DataFrame:
    """One row per (check, level, term)."""
    rows = [
        {"check": record.name, "level": lt.level, "nodes": lt.nodes, "term": term, "value": value}
        for record in report.checks for lt in record.levels for term, value in lt.terms.items()
    ]
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def emit_report(report: RunReport, fmt: str = "json", path: Optional[Union[str, Path]] = None) -> str:
    """Serialise the run report; written to `path` when given, returned either way."""
    if fmt == "csv":
        text = report_rows(report).to_csv(index=False, float_format="%.17g", lineterminator="\n")
    elif fmt == "json":
        text = report.model_dump_json(indent=2) + "\n"
    else:
        raise ConfigError(f"Unknown report format '{fmt}'", "output.format")
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        logger.info(f"✓ Report written to {path}")
    return text


def convergence_study(config: ExperimentConfig, min_level: int, max_level: int) -> pd.DataFrame:
    """Per-level identity terms (or Douglas energies) with empirical orders log2(|Δ_{L-1}| / |Δ_L|)."""
    if not max_level > min_level:
        raise ConfigError(f"max level {max_level} must exceed min level {min_level}", "max_level")
    levels = list(range(min_level, max_level + 1))
    exp = build_experiment(config)
    if exp.weight is not None and exp.function is not None:
        report = verifier.verify_identity(exp.function, exp.weight, exp.operator, exp.domain, levels,
                                          restricted=config.restricted, grading=config.grading,
                                          boundary_exponent=config.boundary_exponent, tol=config.tolerance)
        table = pd.DataFrame([{"level": lt.level, "nodes": lt.nodes, **{t: lt.terms[t] for t in STUDY_TERMS}}
                              for lt in report.levels])
        for term in STUDY_TERMS[:-1]:
            table[f"order_{term}"] = empirical_orders(table[term].to_numpy())
        return table
    cfg = next((c for c in config.checks if c.name == "douglas"), None)
    if cfg is None:
        raise ConfigError("convergence studies need a weight and a function, or a douglas check", "checks")
    g = build_boundary_data(cfg.boundary_data)
    values = [douglas.douglas_energy(g, level) for level in levels]
    table = pd.DataFrame({"level": levels, "nodes": [1 << (2 * lv) for lv in levels], "douglas": values})
    table["order_douglas"] = empirical_orders(values)
    return table
