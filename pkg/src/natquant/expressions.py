"""Safe infix-expression parsing into sympy, and the plain-text chart/field file format.

Accepted syntax is ordinary Python arithmetic (``+ - * / **``, unary minus,
parentheses, numeric literals) over a fixed set of variable names and the
functions ``sin cos tan exp log sqrt pow``. Anything else is rejected; nothing
is ever passed to ``eval``.

File format (UTF-8, ``#`` starts a comment)::

    # unit sphere
    omega_11 = 1
    omega_22 = sin(q1)**2
    domain q1 = 0, pi
    domain q2 = 0, 2*pi, periodic

Indices are 1-based. Off-diagonal entries not listed are zero; ``omega_ab``
fills ``omega_ba``. Deformation-field files use ``f_1 = ...`` lines over the
variables ``x1 .. xn``.
"""

from __future__ import annotations

import ast
import re
from pathlib import Path

import sympy as sp

from .errors import ExpressionError

_FUNCTIONS = {
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "exp": sp.exp,
    "log": sp.log,
    "sqrt": sp.sqrt,
    "pow": sp.Pow,
}
_CONSTANTS = {"pi": sp.pi, "e": sp.E}

_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a**b,
}


def parse_expression(text: str, variables: dict[str, sp.Symbol]) -> sp.Expr:
    """Parse ``text`` into a sympy expression over ``variables``."""
    try:
        tree = ast.parse(text.strip().replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    return _convert(tree.body, variables, text)


def _convert(node, variables, text):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return sp.nsimplify(node.value) if isinstance(node.value, int) else sp.Float(node.value)
    if isinstance(node, ast.Name):
        if node.id in variables:
            return variables[node.id]
        if node.id in _CONSTANTS:
            return _CONSTANTS[node.id]
        raise ExpressionError(f"unknown name {node.id!r} in {text!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        operand = _convert(node.operand, variables, text)
        return -operand if isinstance(node.op, ast.USub) else operand
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](
            _convert(node.left, variables, text), _convert(node.right, variables, text)
        )
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        func = _FUNCTIONS.get(node.func.id)
        if func is None or node.keywords:
            raise ExpressionError(f"unsupported function call in {text!r}")
        args = [_convert(a, variables, text) for a in node.args]
        expected = 2 if node.func.id == "pow" else 1
        if len(args) != expected:
            raise ExpressionError(f"{node.func.id} takes {expected} argument(s) in {text!r}")
        return func(*args)
    raise ExpressionError(f"unsupported syntax in {text!r}")


_ASSIGN = re.compile(r"^\s*(omega|f)_(\d+)\s*=\s*(.+)$")
_DOMAIN = re.compile(r"^\s*domain\s+[qx](\d+)\s*=\s*(.+)$")


def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def _parse_domain(line_no, match, axes):
    idx = int(match.group(1)) - 1
    parts = [p.strip() for p in match.group(2).split(",")]
    periodic = False
    if parts and parts[-1] == "periodic":
        periodic = True
        parts = parts[:-1]
    if len(parts) != 2:
        raise ExpressionError(f"line {line_no}: domain needs 'lo, hi[, periodic]'")
    bounds = []
    for p in parts:
        if p in ("inf", "+inf", "-inf"):
            bounds.append(float(p))
        else:
            bounds.append(float(parse_expression(p, {})))
    axes[idx] = (bounds[0], bounds[1], periodic)


def read_metric_file(path: str | Path):
    """Read a metric expression file.

    Returns
    -------
    symbols : tuple of sympy.Symbol
        ``q1 .. qn``.
    matrix : sympy.Matrix
        Symmetric n x n metric components.
    axes : dict
        Axis index -> ``(lo, hi, periodic)`` for axes with a ``domain`` line.
    """
    entries: dict[tuple[int, int], str] = {}
    axes: dict[int, tuple[float, float, bool]] = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = _strip(raw)
        if not line:
            continue
        if m := _DOMAIN.match(line):
            _parse_domain(line_no, m, axes)
            continue
        m = _ASSIGN.match(line)
        if not m or m.group(1) != "omega" or len(m.group(2)) != 2:
            raise ExpressionError(f"line {line_no}: expected 'omega_ab = <expr>', got {raw!r}")
        a, b = int(m.group(2)[0]) - 1, int(m.group(2)[1]) - 1
        if a < 0 or b < 0:
            raise ExpressionError(f"line {line_no}: indices are 1-based")
        entries[(min(a, b), max(a, b))] = m.group(3)
    if not entries:
        raise ExpressionError(f"{path}: no metric components")
    n = 1 + max(max(k) for k in entries)
    symbols = sp.symbols(" ".join(f"q{i + 1}" for i in range(n)), real=True, seq=True)
    names = {str(s): s for s in symbols}
    matrix = sp.zeros(n, n)
    for (a, b), text in entries.items():
        expr = parse_expression(text, names)
        matrix[a, b] = expr
        matrix[b, a] = expr
    return tuple(symbols), matrix, axes


def read_field_file(path: str | Path):
    """Read a deformation-field file of ``f_a = <expr in x1..xn>`` lines."""
    entries: dict[int, str] = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = _strip(raw)
        if not line:
            continue
        m = _ASSIGN.match(line)
        if not m or m.group(1) != "f":
            raise ExpressionError(f"line {line_no}: expected 'f_a = <expr>', got {raw!r}")
        entries[int(m.group(2)) - 1] = m.group(3)
    if not entries:
        raise ExpressionError(f"{path}: no field components")
    n = 1 + max(entries)
    symbols = sp.symbols(" ".join(f"x{i + 1}" for i in range(n)), real=True, seq=True)
    names = {str(s): s for s in symbols}
    comps = tuple(
        parse_expression(entries[i], names) if i in entries else sp.Integer(0) for i in range(n)
    )
    return tuple(symbols), comps
