"""Target-curvature expressions: constants, t, + - * /, sin, cos, exp."""

import ast
import operator

import numpy as np

from prescurv.core.errors import ExpressionError

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
CONSTANTS = {"pi": np.pi, "e": np.e}

_BINARY = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}


def _compile(node):
    if isinstance(node, ast.Expression):
        return _compile(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        value = float(node.value)
        return lambda t: value
    if isinstance(node, ast.Name):
        if node.id == "t":
            return lambda t: t
        if node.id in CONSTANTS:
            value = CONSTANTS[node.id]
            return lambda t: value
        raise ExpressionError(f"Unknown name {node.id!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINARY:
        op = _BINARY[type(node.op)]
        left, right = _compile(node.left), _compile(node.right)
        return lambda t: op(left(t), right(t))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        op = _UNARY[type(node.op)]
        operand = _compile(node.operand)
        return lambda t: op(operand(t))
    if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
            and node.func.id in FUNCTIONS and len(node.args) == 1 and not node.keywords):
        fn = FUNCTIONS[node.func.id]
        arg = _compile(node.args[0])
        return lambda t: fn(arg(t))
    raise ExpressionError(f"Unsupported syntax: {ast.dump(node)[:60]}")


def compile_expression(text: str):
    """Compile an expression in t to a vectorized callable."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"Cannot parse {text!r}: {exc.msg}") from exc
    body = _compile(tree)

    def evaluate(t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(np.asarray(body(t), dtype=float), t.shape).copy()

    return evaluate
