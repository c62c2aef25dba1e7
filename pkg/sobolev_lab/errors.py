"""Exception hierarchy shared by every module of the lab."""

from typing import Optional, Sequence


class LabError(Exception):
    """Base class for all errors raised by sobolev_lab."""


class DomainError(LabError):
    """An argument lies outside the set where the object is defined."""


class EvaluationError(LabError):
    """A numeric antiderivative or limit could not be evaluated."""


class ConstructionError(LabError):
    """A weight, matrix field, test function or domain is malformed."""


class EllipticityViolation(LabError):
    """The matrix field is not positive definite at some sample point."""


class SingularPointError(LabError):
    """A closed-form jet was requested at a point where it is not differentiable."""


class StencilError(LabError):
    """A finite-difference stencil leaves the domain."""


class ExpressionError(LabError):
    """A closed-form expression uses something outside the grammar."""


class NonFiniteIntegrand(LabError):
    """An integrand returned inf/nan at a quadrature node."""

    def __init__(self, message: str, node: Optional[Sequence[float]] = None):
        super().__init__(message)
        self.node = None if node is None else [float(v) for v in node]


class ConfigError(LabError):
    """An experiment config failed validation; `key` points at the offending entry."""

    def __init__(self, message: str, key: str = ""):
        super().__init__(message)
        self.key = key
