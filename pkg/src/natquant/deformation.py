"""QMP on Euclidean space seen through slightly deformed Cartesian coordinates.

The observables are ``q = x + eps * f(x)`` with ``x`` Cartesian. The metric
in ``q`` is the flat metric pulled back through the inverse map; its exact
DeWitt QMP is compared with the first-order prediction
``(eps * hbar^2 / 4m) * Lap(div f)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import sympy as sp

from .errors import NotInvertible
from .expressions import read_field_file
from .geometry import Axis, Constants, MetricChart
from .quantization import qmp_dewitt

FIXED_POINT_MAX_ITER = 30
FIXED_POINT_TOL = 1e-12


@dataclass(frozen=True)
class DeformationField:
    """A vector field ``f`` on R^n and the amplitude ``epsilon``."""

    epsilon: float
    components: tuple
    symbols: tuple
    name: str = "f"

    def __post_init__(self):
        if len(self.components) != len(self.symbols):
            raise ValueError("need one field component per coordinate")

    @property
    def dim(self) -> int:
        return len(self.symbols)

    def with_epsilon(self, epsilon: float) -> "DeformationField":
        return DeformationField(epsilon, self.components, self.symbols, self.name)

    @cached_property
    def _f(self):
        return sp.lambdify(list(self.symbols), list(self.components), modules="numpy")

    @cached_property
    def _jac(self):
        n = self.dim
        exprs = [sp.diff(self.components[a], self.symbols[b]) for a in range(n) for b in range(n)]
        return sp.lambdify(list(self.symbols), exprs, modules="numpy")

    @cached_property
    def divergence(self) -> sp.Expr:
        return sum(sp.diff(c, s) for c, s in zip(self.components, self.symbols))

    @cached_property
    def _lap_div(self):
        expr = sum(sp.diff(self.divergence, s, 2) for s in self.symbols)
        return sp.lambdify(list(self.symbols), expr, modules="numpy")

    def _stack(self, vals, B, shape):
        out = np.empty((B, len(vals)))
        for k, v in enumerate(vals):
            out[:, k] = v
        return out.reshape((B,) + shape)

    def f(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return self._stack(self._f(*x.T), x.shape[0], (self.dim,))

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """``J[..., a, b] = d f^a / d x^b``."""
        x = np.atleast_2d(x)
        return self._stack(self._jac(*x.T), x.shape[0], (self.dim, self.dim))

    def laplacian_of_divergence(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.broadcast_to(np.asarray(self._lap_div(*x.T), dtype=float), x.shape[:1]).copy()

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x + self.epsilon * self.f(x)

    def inverse(self, q: np.ndarray) -> np.ndarray:
        """Solve ``x + eps f(x) = q`` by the contraction ``x <- q - eps f(x)``."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        x = q.copy()
        if self.epsilon == 0:
            return x
        for _ in range(FIXED_POINT_MAX_ITER):
            new = q - self.epsilon * self.f(x)
            change = np.max(np.abs(new - x))
            x = new
            if change <= FIXED_POINT_TOL:
                break
        else:
            raise NotInvertible(f"{self.name}: fixed-point inversion did not converge")
        # two extra sweeps take the residual from ~tol*eps down to rounding level
        for _ in range(2):
            x = q - self.epsilon * self.f(x)
        return x


def _field_from_id(field_id: str, n: int) -> tuple[tuple, tuple, str]:
    xs = sp.symbols(" ".join(f"x{i + 1}" for i in range(n)), real=True, seq=True)
    kind, _, arg = field_id.partition(":")
    zero = [sp.Integer(0)] * n
    if kind == "sin-x":
        comps = [sp.sin(xs[0])] + zero[1:]
    elif kind == "linear":
        entries = [sp.Rational(v.strip()) for v in arg.split(",")]
        if len(entries) != n * n:
            raise ValueError(f"linear:A needs {n * n} comma-separated entries")
        A = sp.Matrix(n, n, entries)
        comps = list(A * sp.Matrix(xs))
    elif kind == "gaussian-bump":
        sigma = sp.Rational(arg.strip())
        r2 = sum(x**2 for x in xs)
        comps = [x * sp.exp(-r2 / (2 * sigma**2)) for x in xs]
    else:
        raise ValueError(f"unknown deformation field {field_id!r}")
    return tuple(comps), tuple(xs), field_id


def deformation_field(field_id: str, epsilon: float, n: int = 2) -> DeformationField:
    """Built-in field by id (``sin-x``, ``linear:a11,a12,...``, ``gaussian-bump:sigma``)
    or a path to a field expression file."""
    if field_id.startswith("file:"):
        symbols, comps = read_field_file(field_id[5:])
        return DeformationField(epsilon, comps, symbols, field_id)
    comps, xs, name = _field_from_id(field_id, n)
    return DeformationField(epsilon, comps, xs, name)


def deformed_chart(d: DeformationField, domain: Sequence[Axis] | None = None) -> MetricChart:
    """Chart in the deformed coordinates ``q``, metric ``(dx/dq)^T (dx/dq)``.

    Partials are NUMERIC: every evaluation inverts the deformation map.
    """
    n = d.dim
    axes = tuple(domain) if domain is not None else (Axis(),) * n
    eye = np.eye(n)

    def metric(Q: np.ndarray) -> np.ndarray:
        x = d.inverse(Q)
        A = eye + d.epsilon * d.jacobian(x)  # dq/dx
        if np.any(np.linalg.det(A) <= 0):
            raise NotInvertible(f"{d.name}: deformation Jacobian not positive")
        return np.linalg.inv(A @ np.swapaxes(A, -1, -2))

    return MetricChart(n, axes, metric, None, f"plane-deformed:{d.epsilon:g}:{d.name}", {"field": d})


def qmp_deformation_first_order(d: DeformationField, consts: Constants, q) -> np.ndarray:
    """First-order-in-eps QMP, ``(eps hbar^2 / 4m) * Lap(div f)`` at ``q``.

    The sign and the 1/4 are fixed by comparison with the exact DeWitt QMP of
    :func:`deformed_chart`; the residual is O(eps^2).
    """
    q = np.asarray(q, dtype=float)
    lead = q.shape[:-1]
    val = d.laplacian_of_divergence(q.reshape(-1, d.dim))
    return (d.epsilon * consts.hbar**2 / (4.0 * consts.mass) * val).reshape(lead)


@dataclass(frozen=True)
class ConvergenceStudy:
    epsilons: np.ndarray
    exact: np.ndarray  # exact DeWitt QMP of the deformed chart, per eps and point
    first_order: np.ndarray
    gaps: np.ndarray  # max over points of |exact - first_order|, per eps

    @property
    def ratios(self) -> np.ndarray:
        """Gap reduction factor between consecutive epsilons."""
        return self.gaps[:-1] / self.gaps[1:]


def convergence_study(d: DeformationField, consts: Constants, points, epsilons=(1e-2, 5e-3, 2.5e-3)) -> ConvergenceStudy:
    """Compare the exact and first-order QMP of the deformation over a sequence of eps."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    exact, approx = [], []
    for eps in epsilons:
        de = d.with_epsilon(float(eps))
        exact.append(qmp_dewitt(deformed_chart(de), consts, pts).v_dw)
        approx.append(qmp_deformation_first_order(de, consts, pts))
    exact, approx = np.array(exact), np.array(approx)
    gaps = np.max(np.abs(exact - approx), axis=1)
    return ConvergenceStudy(np.asarray(epsilons, dtype=float), exact, approx, gaps)
