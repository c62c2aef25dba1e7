"""
Pydantic models: the reports every check returns, and the experiment config
files that the runner loads.
"""

import math
from enum import Enum
from typing import Annotated, Dict, List, Literal, Optional, Union, get_args

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _Report(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")


class Status(str, Enum):
    VERIFIED = "verified"
    ASSUMED = "assumed"
    VIOLATED = "violated"
    NUMERIC = "checked numerically"


class Hypothesis(_Report):
    name: str = Field(description="Hypothesis under which the result holds")
    status: Status
    detail: str = ""


class Constant(_Report):
    value: float
    provenance: str = Field(description="How the value was obtained, e.g. 'exact' or 'upper bound, slicing'")


class Diagnostic(_Report):
    """An integral tracked across refinement levels to detect divergence."""

    values: List[float]
    verdict: str
    last_increment: float


class LevelTerms(_Report):
    level: int
    nodes: int
    terms: Dict[str, float]


class IdentityReport(_Report):
    check: str
    term_I2: float = Field(description="∫ h(u) ||∇u||_A^2")
    term_JP: float = Field(description="-∫ Pu H(u)")
    term_Jdiv: float = Field(description="-∫ div A · ∇u H(u)")
    theta: float = Field(description="∮ n^T A ∇H~(u) dσ")
    residual: float
    relative_residual: float
    quadrature_level: int
    converged: bool
    tolerance: float
    abs_PH: float = Field(default=float("nan"), description="∫ |Pu| |H(u)|")
    gh: float = Field(default=float("nan"), description="∫ G_H(u)")
    gh_finite: Optional[bool] = None
    levels: List[LevelTerms] = Field(default_factory=list)
    diagnostics: Dict[str, Diagnostic] = Field(default_factory=dict)
    hypotheses: List[Hypothesis] = Field(default_factory=list)
    verified: bool = False
    notes: List[str] = Field(default_factory=list)


class InequalityReport(_Report):
    name: str
    lhs: float
    rhs: float
    margin: float = Field(description="rhs - lhs")
    constants_used: Dict[str, Constant] = Field(default_factory=dict)
    applicable: bool = True
    holds: bool = False
    informative: bool = True
    tolerance: float = 0.0
    notes: List[str] = Field(default_factory=list)


class TraceReport(_Report):
    name: str = "trace-constancy"
    T: float
    spread: float
    averages: List[List[float]] = Field(default_factory=list)
    converged: bool
    applicable: bool = True
    holds: bool = False
    notes: List[str] = Field(default_factory=list)


class ToleranceReport(_Report):
    """Max-error style checks: tangential gradient, pointwise identity, Θ representation."""

    name: str
    max_error: float
    tolerance: float
    n_points: int
    applicable: bool = True
    holds: bool = False
    values: Dict[str, float] = Field(default_factory=dict)
    notes: List[str] = Field(default_factory=list)


class DouglasReport(_Report):
    name: str = "douglas"
    levels: List[int]
    values: List[float] = Field(description="Douglas energy per level")
    fourier: float = Field(description="π Σ k (a_k^2 + b_k^2)")
    dirichlet: float = Field(description="Dirichlet energy of the Poisson extension")
    verdict: str
    converged: bool
    applicable: bool = True
    holds: bool = False
    tolerance: float
    notes: List[str] = Field(default_factory=list)


class RepresentationReport(_Report):
    """Θ against its boundary-only representation for P = Δ."""

    name: str = "theta-representation"
    p: float
    theta_direct: float
    sobolev_bregman: float
    laplacian_term: float
    representation: float
    relative_gap: float
    harmonic: bool
    finding: bool = Field(description="Mismatch on a non-harmonic u, reported apart from failures")
    applicable: bool = True
    holds: bool = False
    tolerance: float
    levels: List[int] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=list)


# ----------------------
# Experiment configs
# ----------------------

class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid")


class NormalizationSpec(_Spec):
    kind: Literal["hardy-at-0", "conjugate-hardy-at-B", "anchored"]
    s0: float = Field(default=1.0, ge=0.0, description="Anchor point for 'anchored'")
    value: float = Field(default=0.0, description="H~(s0) for 'anchored'")


class _WeightSpec(_Spec):
    B: float = Field(default=math.inf, gt=0.0, description="Right end of (0, B); 'inf' allowed")
    offset: float = Field(default=0.0, description="C in H = H_0 - C")
    normalization: Optional[NormalizationSpec] = Field(default=None, description="Default: Hardy, conjugate Hardy, anchored")


class PowerWeightSpec(_WeightSpec):
    family: Literal["power"]
    alpha: float


class PowerLogWeightSpec(_WeightSpec):
    family: Literal["power-log"]
    a: float
    b: float


class ExponentialWeightSpec(_WeightSpec):
    family: Literal["exponential"]
    b: float
    a: float


class TauWeightSpec(_WeightSpec):
    family: Literal["tau-generated"]
    tau: str = Field(description="Closed form in s with T_H = tau")
    anchor: float = Field(default=1.0, ge=0.0)


class CustomWeightSpec(_WeightSpec):
    family: Literal["custom-closed-form"]
    h: str = Field(description="Closed form in s")


WeightSpec = Annotated[Union[PowerWeightSpec, PowerLogWeightSpec, ExponentialWeightSpec, TauWeightSpec,
                             CustomWeightSpec], Field(discriminator="family")]


class ModeSpec(_Spec):
    k: int = Field(ge=1)
    a: float = 0.0
    b: float = 0.0


class RadialPowerSpec(_Spec):
    family: Literal["radial-power"]
    alpha: float
    scale: float = 1.0
    shift: float = 0.0


class QuadraticRadialSpec(_Spec):
    family: Literal["quadratic-radial"]
    a: float = 2.0
    b: float = 1.0
    scale: float = 1.0
    shift: float = 0.0


class BumpSpec(_Spec):
    family: Literal["bump"]
    k: int = Field(default=2, ge=1)
    center: Optional[List[float]] = None
    radius: float = Field(default=1.0, gt=0.0)
    scale: float = 1.0


class SignedPowerSpec(_Spec):
    family: Literal["signed-power-1d"]
    epsilon: float = Field(gt=0.0)
    scale: float = 1.0
    shift: float = 1.0


class HarmonicPolynomialSpec(_Spec):
    family: Literal["harmonic-polynomial"]
    degree: int = Field(ge=0)
    index: Literal[0, 1] = 0
    scale: float = 1.0
    shift: float = 0.0


class HarmonicSeriesSpec(_Spec):
    family: Literal["harmonic-series"]
    modes: List[ModeSpec]
    a0: float = 0.0


class ConstantSpec(_Spec):
    family: Literal["constant"]
    c: float


class CustomFunctionSpec(_Spec):
    family: Literal["custom-closed-form"]
    expression: str = Field(description="Closed form in x1..xn")
    nonnegative: bool = False


FunctionSpec = Annotated[Union[RadialPowerSpec, QuadraticRadialSpec, BumpSpec, SignedPowerSpec,
                               HarmonicPolynomialSpec, HarmonicSeriesSpec, ConstantSpec, CustomFunctionSpec],
                         Field(discriminator="family")]


class IdentityOperatorSpec(_Spec):
    kind: Literal["identity"]


class ConstantOperatorSpec(_Spec):
    kind: Literal["constant"]
    matrix: List[List[float]]


class DiagonalAffineSpec(_Spec):
    kind: Literal["diagonal-affine"]
    constants: List[float]
    slopes: List[List[float]]


class ScalarProfileSpec(_Spec):
    kind: Literal["scalar-profile"]
    profile: str = Field(description="phi(x) in A = phi(x) Id")


class CustomOperatorSpec(_Spec):
    kind: Literal["custom-closed-form"]
    entries: List[List[str]]


OperatorSpec = Annotated[Union[IdentityOperatorSpec, ConstantOperatorSpec, DiagonalAffineSpec, ScalarProfileSpec,
                               CustomOperatorSpec], Field(discriminator="kind")]


class BallSpec(_Spec):
    kind: Literal["ball"]
    center: List[float] = Field(default_factory=lambda: [0.0, 0.0])
    radius: float = Field(default=1.0, gt=0.0)


class BoxSpec(_Spec):
    kind: Literal["box"]
    lo: List[float]
    hi: List[float]


DomainSpec = Annotated[Union[BallSpec, BoxSpec], Field(discriminator="kind")]


class BoundaryDataSpec(_Spec):
    representation: Literal["trig-polynomial", "closed-form"] = "trig-polynomial"
    modes: List[ModeSpec] = Field(default_factory=list)
    a0: float = 0.0
    expression: Optional[str] = Field(default=None, description="Closed form in theta")

    @model_validator(mode="after")
    def _expression_for_closed_form(self):
        if self.representation == "closed-form" and not self.expression:
            raise ValueError("closed-form boundary data needs an 'expression'")
        return self


CheckName = Literal[
    "identity", "identity-restricted", "ineq-divfree", "ineq-general", "theta-trace", "sign-simplification",
    "opial", "gh-bound", "simplified", "chain-rule", "metafune", "trace-constancy", "tangential-gradient",
    "pointwise", "douglas", "theta-representation",
]

CHECK_NAMES = get_args(CheckName)
FUNCTION_FREE_CHECKS = {"douglas"}
WEIGHT_FREE_CHECKS = {"metafune", "tangential-gradient", "douglas", "theta-representation"}


class CheckSpec(_Spec):
    name: CheckName
    expect: Literal["pass", "diverge"] = Field(default="pass", description="'diverge' marks a negative control")
    tolerance: Optional[float] = Field(default=None, gt=0.0)
    p: Optional[float] = Field(default=None, description="Exponent for metafune / douglas / theta-representation")
    g: Optional[str] = Field(default=None, description="Metafune-Spina g as a closed form in s")
    boundary_data: Optional[BoundaryDataSpec] = None
    levels: Optional[List[int]] = Field(default=None, description="Overrides the experiment levels")


class OutputSpec(_Spec):
    format: Literal["json", "csv"] = "json"
    path: Optional[str] = None


class ExperimentConfig(_Spec):
    name: str
    domain: DomainSpec
    weight: Optional[WeightSpec] = None
    function: Optional[FunctionSpec] = None
    operator: OperatorSpec = Field(default_factory=lambda: IdentityOperatorSpec(kind="identity"))
    checks: List[Union[CheckName, CheckSpec]] = Field(default_factory=list)
    levels: List[int] = Field(default_factory=lambda: [3, 4, 5])
    grading: Optional[float] = Field(default=None, ge=1.0, description="None: automatic from boundary_exponent")
    boundary_exponent: Optional[float] = Field(default=None, description="Predicted boundary exponent of the integrand")
    restricted: bool = False
    tolerance: Optional[float] = Field(default=None, gt=0.0)
    output: OutputSpec = Field(default_factory=OutputSpec)

    @field_validator("checks")
    @classmethod
    def _as_specs(cls, checks):
        return [CheckSpec(name=c) if isinstance(c, str) else c for c in checks]

    @field_validator("levels")
    @classmethod
    def _increasing(cls, levels):
        if not levels or levels[0] < 1 or any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError(f"levels must be positive and strictly increasing, got {levels}")
        return levels

    @model_validator(mode="after")
    def _inputs_present(self):
        for check in self.checks:
            if check.name not in WEIGHT_FREE_CHECKS and self.weight is None:
                raise ValueError(f"weight: required by check '{check.name}'")
            if check.name not in FUNCTION_FREE_CHECKS and self.function is None:
                raise ValueError(f"function: required by check '{check.name}'")
            if check.name == "douglas" and check.boundary_data is None:
                raise ValueError("boundary_data: required by check 'douglas'")
        return self


# ----------------------
# Run reports
# ----------------------

class CheckRecord(_Report):
    name: str
    applicable: bool
    holds: bool
    converged: Optional[bool] = None
    expect: str = "pass"
    passed: bool = Field(description="Counts towards the suite verdict")
    wall_time: Optional[float] = None
    levels: List[LevelTerms] = Field(default_factory=list)
    constants: Dict[str, Constant] = Field(default_factory=dict)
    report: dict = Field(default_factory=dict)


class RunReport(_Report):
    config: str
    checks: List[CheckRecord] = Field(default_factory=list)
    verdict: Literal["pass", "fail"] = "pass"
