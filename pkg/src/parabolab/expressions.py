"""Safe closed-form expression fields over (x1..xd, t).

Coefficient and source fields in experiment configs are given as strings
like ``"abs(x1)**0.5 + sin(t)"``.  They are compiled to vectorized numpy
callables after an AST whitelist check, so configs cannot execute
arbitrary code.
"""

from __future__ import annotations

import ast

import numpy as np

__all__ = ["ExpressionError", "compile_field"]


class ExpressionError(ValueError):
    """Raised when a field expression uses names or syntax outside the grammar."""


_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "sign": np.sign,
    "min": lambda *a: _reduce(np.minimum, a),
    "max": lambda *a: _reduce(np.maximum, a),
}

_CONSTS = {"pi": np.pi, "e": np.e}

_ALLOWED_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Call,
    ast.Name,
    ast.Load,
    ast.Constant,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.USub,
    ast.UAdd,
)


def _reduce(op, args):
    out = args[0]
    for a in args[1:]:
        out = op(out, a)
    return out


def _validate(tree: ast.AST, names: set[str]) -> None:
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ExpressionError(f"disallowed syntax: {type(node).__name__}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise ExpressionError("only whitelisted function calls allowed")
            if node.keywords:
                raise ExpressionError("keyword arguments not allowed")
        if isinstance(node, ast.Name) and node.id not in names and node.id not in _FUNCS:
            raise ExpressionError(f"unknown name {node.id!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ExpressionError("only numeric constants allowed")


def compile_field(expr: str | float, d: int):
    """Compile ``expr`` into ``f(x, t)``.

    ``x`` has shape (..., d) and ``t`` is scalar or broadcastable; the
    result broadcasts over the leading axes.  Numbers are accepted and
    give constant fields.
    """
    if isinstance(expr, (int, float)):
        value = float(expr)

        def const(x, t, _v=value):
            x = np.asarray(x, dtype=float)
            shape = np.broadcast_shapes(x.shape[:-1], np.shape(t))
            return np.full(shape, _v)

        const.expression = repr(expr)
        return const

    names = {f"x{i + 1}" for i in range(d)} | {"t"} | set(_CONSTS)
    tree = ast.parse(expr, mode="eval")
    _validate(tree, names)
    code = compile(tree, "<field>", "eval")

    def field(x, t):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        env = {f"x{i + 1}": x[..., i] for i in range(d)}
        env["t"] = t
        env.update(_FUNCS)
        env.update(_CONSTS)
        out = np.asarray(eval(code, {"__builtins__": {}}, env), dtype=float)  # noqa: S307
        shape = np.broadcast_shapes(x.shape[:-1], t.shape)
        return np.broadcast_to(out, shape).astype(float) if out.shape != shape else out

    field.expression = expr
    return field
