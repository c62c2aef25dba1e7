"""
Closed-form expression grammar.

Operator profiles, custom test functions, custom weights, the Metafune-Spina `g`
and closed-form boundary data are all written as small expressions such as
``"2 + x1"``, ``"(1 - x1**2 - x2**2)*(2 + x1)"`` or ``"1 + s**2"``. The grammar is
sums, products and powers of the declared variables and numeric constants, plus
``exp``, ``log``, ``sin``, ``cos`` and ``sqrt``. Derivatives are exact (sympy);
evaluation is vectorised through ``lambdify``.
"""

from functools import cached_property
from typing import Sequence, Tuple

import numpy as np
import sympy as sp
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from sobolev_lab.errors import ExpressionError

_TRANSFORMS = standard_transformations + (convert_xor,)

_FUNCTIONS = {
    "exp": sp.exp,
    "log": sp.log,
    "sin": sp.sin,
    "cos": sp.cos,
    "sqrt": sp.sqrt,
}

_ALLOWED_NODES = (sp.Add, sp.Mul, sp.Pow, sp.Symbol, sp.Number, sp.NumberSymbol,
                  sp.exp, sp.log, sp.sin, sp.cos)


def coordinate_names(dimension: int) -> Tuple[str, ...]:
    return tuple(f"x{i + 1}" for i in range(dimension))


def parse(text: str, variables: Sequence[str]) -> sp.Expr:
    """Parse `text` into a sympy expression restricted to the grammar."""
    symbols = {name: sp.Symbol(name, real=True) for name in variables}
    namespace = {
        "__builtins__": {},
        "Integer": sp.Integer,
        "Float": sp.Float,
        "Rational": sp.Rational,
        "Symbol": sp.Symbol,
        "pi": sp.pi,
        "E": sp.E,
        **_FUNCTIONS,
    }
    try:
        expr = parse_expr(text, local_dict=dict(symbols), global_dict=namespace,
                          transformations=_TRANSFORMS)
    except Exception as e:
        raise ExpressionError(f"Cannot parse expression '{text}': {e}") from e
    if not isinstance(expr, sp.Expr):
        raise ExpressionError(f"Expression '{text}' is not a scalar expression")
    _validate(expr, set(symbols.values()), text)
    return expr


def _validate(expr: sp.Expr, allowed_symbols: set, text: str) -> None:
    for node in sp.preorder_traversal(expr):
        if not isinstance(node, _ALLOWED_NODES):
            raise ExpressionError(f"'{type(node).__name__}' is not allowed in '{text}'")
        if isinstance(node, sp.Symbol) and node not in allowed_symbols:
            raise ExpressionError(f"Unknown variable '{node}' in '{text}'")


class ClosedForm:
    """A scalar closed-form expression in the given variables with exact derivatives."""

    def __init__(self, expr: sp.Expr, variables: Sequence[str], text: str = ""):
        self.variables = tuple(variables)
        self.symbols = tuple(sp.Symbol(name, real=True) for name in self.variables)
        self.expr = expr
        self.text = text or str(expr)

    @classmethod
    def from_text(cls, text: str, variables: Sequence[str]) -> "ClosedForm":
        return cls(parse(text, variables), variables, text)

    def __repr__(self) -> str:
        return f"ClosedForm({self.text!r}, {self.variables})"

    @cached_property
    def _fn(self):
        return sp.lambdify(self.symbols, self.expr, modules="numpy")

    def derivative(self, *names: str) -> "ClosedForm":
        expr = self.expr
        for name in names:
            expr = sp.diff(expr, self.symbols[self.variables.index(name)])
        return ClosedForm(expr, self.variables)

    @cached_property
    def gradient_forms(self) -> Tuple["ClosedForm", ...]:
        return tuple(self.derivative(name) for name in self.variables)

    @cached_property
    def hessian_forms(self) -> Tuple[Tuple["ClosedForm", ...], ...]:
        return tuple(tuple(g.derivative(name) for name in self.variables) for g in self.gradient_forms)

    def is_constant(self) -> bool:
        return not (self.expr.free_symbols & set(self.symbols))

    def __call__(self, *arrays) -> np.ndarray:
        arrays = [np.asarray(a, dtype=float) for a in arrays]
        shape = np.broadcast_shapes(*(a.shape for a in arrays)) if arrays else ()
        with np.errstate(all="ignore"):
            value = self._fn(*arrays)
        return np.broadcast_to(np.asarray(value, dtype=float), shape).copy()

    def at_points(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at an (m, n) array of points (columns follow `variables`)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self(*points.T)

    def gradient_at(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.stack([g.at_points(points) for g in self.gradient_forms], axis=-1)

    def hessian_at(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        rows = [np.stack([h.at_points(points) for h in row], axis=-1) for row in self.hessian_forms]
        return np.stack(rows, axis=-2)
