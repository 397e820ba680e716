"""Small arithmetic expression language for configuring fields.

Initial data and body forces are written as text expressions over the
macro coordinates x1..x3, the cell coordinates y1..y3, and time t, for
example ``sin(pi*x1)*(1 + 0.5*cos(2*pi*y1))``. Vector-valued data uses
one expression per component, separated by ';'. Expressions are parsed
with the ast module and restricted to plain arithmetic plus a fixed set
of math functions, so a run configuration stays data, not code.
"""

from __future__ import annotations

import ast

import numpy as np

from .errors import InvalidArgumentError

_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}
_CONSTANTS = {"pi": np.pi, "e": np.e}
_VARIABLES = ("x1", "x2", "x3", "y1", "y2", "y3", "t")

_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_UNARY = (ast.UAdd, ast.USub)


def _check(node: ast.AST, text: str) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body, text)
    elif isinstance(node, ast.BinOp) and isinstance(node.op, _BINOPS):
        _check(node.left, text)
        _check(node.right, text)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, _UNARY):
        _check(node.operand, text)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
            raise InvalidArgumentError(f"unknown function in expression {text!r}")
        if node.keywords:
            raise InvalidArgumentError(f"keyword arguments not allowed in {text!r}")
        for arg in node.args:
            _check(arg, text)
    elif isinstance(node, ast.Name):
        if node.id not in _VARIABLES and node.id not in _CONSTANTS:
            raise InvalidArgumentError(f"unknown name {node.id!r} in expression {text!r}")
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise InvalidArgumentError(f"non-numeric literal in expression {text!r}")
    else:
        raise InvalidArgumentError(
            f"disallowed syntax ({type(node).__name__}) in expression {text!r}"
        )


class Expression:
    """One scalar component, evaluated vectorized over coordinate arrays."""

    def __init__(self, text: str):
        self.text = text.strip()
        if not self.text:
            raise InvalidArgumentError("empty expression")
        try:
            tree = ast.parse(self.text, mode="eval")
        except SyntaxError as exc:
            raise InvalidArgumentError(f"cannot parse expression {self.text!r}: {exc}") from exc
        _check(tree, self.text)
        self._code = compile(tree, "<expression>", "eval")

    def __call__(self, env: dict):
        scope = {"__builtins__": {}}
        scope.update(_CONSTANTS)
        scope.update(_FUNCTIONS)
        scope.update(env)
        return eval(self._code, scope)  # noqa: S307 - AST whitelisted above

    def __repr__(self):
        return f"Expression({self.text!r})"


class VectorData:
    """Vector-valued space-time data, one expression per component.

    Calling convention: ``data(x, y, t)`` where ``x`` and ``y`` are
    broadcast-compatible arrays with a trailing component axis (``y``
    may be None when no cell coordinate applies) and ``t`` is a scalar.
    Returns an array with trailing axis of length ``dim``.
    """

    def __init__(self, components, dim: int):
        if isinstance(components, str):
            components = [c for c in components.split(";")]
        comps = [c if isinstance(c, Expression) else Expression(str(c)) for c in components]
        if len(comps) != dim:
            raise InvalidArgumentError(
                f"expected {dim} components separated by ';', got {len(comps)}"
            )
        self.components = comps
        self.dim = dim

    def __call__(self, x, y, t):
        x = np.asarray(x, dtype=float)
        env = {"t": t}
        for k in range(x.shape[-1]):
            env[f"x{k + 1}"] = x[..., k]
        base_shape = x.shape[:-1]
        if y is not None:
            y = np.asarray(y, dtype=float)
            for k in range(y.shape[-1]):
                env[f"y{k + 1}"] = y[..., k]
            base_shape = np.broadcast_shapes(base_shape, y.shape[:-1])
        out = np.empty(base_shape + (self.dim,), dtype=float)
        for k, comp in enumerate(self.components):
            out[..., k] = comp(env)
        return out

    def __repr__(self):
        return f"VectorData([{'; '.join(c.text for c in self.components)}])"


def as_vector_data(obj, dim: int):
    """Wrap expressions, strings, or callables into a common callable form."""
    if obj is None:
        return None
    if callable(obj) and not isinstance(obj, (Expression, VectorData)):
        return obj
    if isinstance(obj, VectorData):
        if obj.dim != dim:
            raise InvalidArgumentError(f"data has {obj.dim} components, grid needs {dim}")
        return obj
    return VectorData(obj, dim)
