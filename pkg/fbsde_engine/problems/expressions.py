"""
Restricted arithmetic expressions for custom problem coefficients.

Grammar (whitespace insignificant):

    expr    := term (("+" | "-") term)*
    term    := factor ("*" factor)*
    factor  := number | var | func "(" expr ("," expr)* ")" | "(" expr ")" | "-" factor
    func    := exp | sin | cos | min | max
    var     := one of the variables allowed for the coefficient (t, x, y, z, q, e)

Expressions are parsed with Python's ``ast`` module and every node is checked
against the grammar; the result is a numpy-vectorised callable. Nothing is
ever passed to ``eval``.
"""

import ast
from functools import reduce
from typing import Callable, Dict, Sequence

import numpy as np

from levy_engine.errors import ConfigurationError


FUNCTIONS: Dict[str, Callable] = {
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "min": lambda *args: reduce(np.minimum, args),
    "max": lambda *args: reduce(np.maximum, args),
}

_UNARY = {"exp", "sin", "cos"}

_BINARY_OPERATORS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
}


def _compile_node(node: ast.AST, variables: Sequence[str], text: str) -> Callable[[dict], np.ndarray]:
    if isinstance(node, ast.Expression):
        return _compile_node(node.body, variables, text)

    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ConfigurationError(f"Only numeric constants are allowed in {text!r}")
        value = float(node.value)
        return lambda env: value

    if isinstance(node, ast.Name):
        if node.id not in variables:
            allowed = ", ".join(variables)
            raise ConfigurationError(f"Unknown variable {node.id!r} in {text!r}; allowed: {allowed}")
        name = node.id
        return lambda env: env[name]

    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        operand = _compile_node(node.operand, variables, text)
        if isinstance(node.op, ast.USub):
            return lambda env: np.negative(operand(env))
        return operand

    if isinstance(node, ast.BinOp) and type(node.op) in _BINARY_OPERATORS:
        operator = _BINARY_OPERATORS[type(node.op)]
        left = _compile_node(node.left, variables, text)
        right = _compile_node(node.right, variables, text)
        return lambda env: operator(left(env), right(env))

    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            raise ConfigurationError(f"Unsupported function call in {text!r}")
        if node.keywords or not node.args:
            raise ConfigurationError(f"{node.func.id} takes positional arguments only in {text!r}")
        name = node.func.id
        if name in _UNARY and len(node.args) != 1:
            raise ConfigurationError(f"{name} takes exactly one argument in {text!r}")
        function = FUNCTIONS[name]
        arguments = [_compile_node(arg, variables, text) for arg in node.args]
        return lambda env: function(*(argument(env) for argument in arguments))

    raise ConfigurationError(f"Unsupported syntax {type(node).__name__} in {text!r}")


def compile_expression(text: str, variables: Sequence[str]) -> Callable[..., np.ndarray]:
    """
    Compile an expression into a vectorised function of ``variables``.

    Args:
        text: Expression source, e.g. ``"0.2*sin(x) + 0.1"``
        variables: Positional argument names of the returned callable

    Returns:
        Callable taking one array per variable and returning a float array of
        their broadcast shape

    Raises:
        ConfigurationError: on syntax outside the grammar
    """
    if not isinstance(text, (str, int, float)) or isinstance(text, bool):
        raise ConfigurationError(f"Expression must be a string or number, got {text!r}")
    source = str(text).strip()
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ConfigurationError(f"Cannot parse expression {source!r}: {exc.msg}") from exc
    body = _compile_node(tree, tuple(variables), source)

    def evaluate(*args):
        if len(args) != len(variables):
            raise TypeError(f"Expected {len(variables)} arguments ({', '.join(variables)}), got {len(args)}")
        arrays = [np.asarray(arg, dtype=float) for arg in args]
        shape = np.broadcast_shapes(*(array.shape for array in arrays))
        result = np.asarray(body(dict(zip(variables, arrays))), dtype=float)
        return np.broadcast_to(result, shape).copy()

    evaluate.__name__ = "expression"
    evaluate.__doc__ = source
    return evaluate
