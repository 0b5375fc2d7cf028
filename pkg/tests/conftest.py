import numpy as np
import pytest
import sympy as sp


def symbolic_dewitt(matrix, symbols, hbar=1, mass=1):
    """-(hbar^2/2m) w^(-1/4) d_a(w^ab d_b w^(1/4)) by direct symbolic differentiation."""
    w = sp.simplify(matrix.det())
    ginv = sp.simplify(matrix.inv())
    w4 = w ** sp.Rational(1, 4)
    n = len(symbols)
    body = sum(
        sp.diff(ginv[a, b] * sp.diff(w4, symbols[b]), symbols[a]) for a in range(n) for b in range(n)
    )
    return -sp.Rational(hbar) ** 2 / (2 * sp.nsimplify(mass)) * body / w4


def evaluate(expr, symbols, point):
    return complex(expr.subs(dict(zip(symbols, point))).evalf(30)).real


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(number: int, ok: bool, detail: str) -> None:
    """Store the outcome of an acceptance criterion and print it."""
    ACCEPTANCE[number] = (bool(ok), detail)
    print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
