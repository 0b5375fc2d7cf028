"""Charts, metric jets and pointwise curvature.

Every evaluator here is batched: a point argument may be a single n-vector or
an array of shape ``(..., n)``; results carry the same leading shape.

Index layout of the derivative arrays (trailing axes are derivative indices)::

    MetricJet.d1[..., a, b, c]     = d_c omega_ab
    MetricJet.d2[..., a, b, c, d]  = d_c d_d omega_ab
    GeometryJet.christoffel[..., a, b, c] = Gamma^a_bc
    GeometryJet.riemann[..., a, b, c, d]  = R^a_bcd   (antisymmetric in c, d)

Curvature convention: ``R^a_bcd = d_c Gamma^a_db - d_d Gamma^a_cb + ...`` and
``Ric_bd = R^a_bad``, which gives ``+2`` for the unit two-sphere. For a
one-form ``f``, ``(nabla_a nabla_b - nabla_b nabla_a) f_c = -R^d_cab f_d``; the
tensor defined through that commutator is ``-R^d_cab`` in this layout and
yields the same Ricci scalar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import sympy as sp

from .errors import NonPositiveDefinite, PointOutsideDomain, StencilClipsBoundary

EPS = np.finfo(float).eps
# first derivatives: cbrt(eps); second derivatives use eps**(1/4) (see README)
FIRST_STEP = EPS ** (1.0 / 3.0)
SECOND_STEP = EPS**0.25

ANALYTIC = "analytic"
NUMERIC = "numeric"


@dataclass(frozen=True)
class Constants:
    """Physical constants in the chosen units."""

    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0 and self.mass > 0):
            raise ValueError("hbar and mass must be positive")

    @property
    def kinetic(self) -> float:
        """hbar^2 / (2 m)."""
        return self.hbar**2 / (2.0 * self.mass)


@dataclass(frozen=True)
class Axis:
    lo: float = -math.inf
    hi: float = math.inf
    periodic: bool = False

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class MetricJet:
    value: np.ndarray
    d1: np.ndarray | None = None
    d2: np.ndarray | None = None


@dataclass(frozen=True)
class MetricChart:
    """A single coordinate chart with a metric-component evaluator.

    ``metric_eval`` maps an array of points ``(B, n)`` to ``(B, n, n)``.
    ``jet_eval``, when given, returns the exact triple ``(omega, d omega,
    dd omega)`` for a batch and makes the chart ANALYTIC; otherwise partials are
    taken by Richardson-extrapolated central differences.
    """

    dim: int
    axes: tuple[Axis, ...]
    metric_eval: Callable[[np.ndarray], np.ndarray]
    jet_eval: Callable[[np.ndarray], tuple] | None = None
    name: str = "chart"
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.dim < 1 or len(self.axes) != self.dim:
            raise ValueError("chart needs one Axis per dimension")

    @property
    def jet_source(self) -> str:
        return ANALYTIC if self.jet_eval is not None else NUMERIC

    def as_numeric(self) -> "MetricChart":
        """Same metric with partials forced through finite differences."""
        return MetricChart(self.dim, self.axes, self.metric_eval, None, self.name + "[numeric]", self.meta)

    def wrap(self, q: np.ndarray) -> np.ndarray:
        """Reduce periodic coordinates into ``[lo, hi)``."""
        q = np.array(q, dtype=float, copy=True)
        for a, ax in enumerate(self.axes):
            if ax.periodic:
                q[..., a] = ax.lo + np.mod(q[..., a] - ax.lo, ax.length)
        return q

    def difference(self, q1: np.ndarray, q0: np.ndarray) -> np.ndarray:
        """Coordinate difference ``q1 - q0`` with periodic axes taken minimally."""
        d = np.asarray(q1, dtype=float) - np.asarray(q0, dtype=float)
        for a, ax in enumerate(self.axes):
            if ax.periodic:
                d[..., a] = np.mod(d[..., a] + 0.5 * ax.length, ax.length) - 0.5 * ax.length
        return d

    def check_domain(self, q: np.ndarray, margin: np.ndarray | None = None) -> None:
        """Raise unless every point lies strictly inside the non-periodic bounds.

        ``margin`` (same shape as ``q``) is the stencil half-width; a point is
        refused with StencilClipsBoundary when the stencil would cross an edge.
        """
        q = np.asarray(q)
        for a, ax in enumerate(self.axes):
            if ax.periodic:
                continue
            x = q[..., a]
            if not np.all(np.isfinite(x)) or np.any(x <= ax.lo) or np.any(x >= ax.hi):
                raise PointOutsideDomain(
                    f"{self.name}: coordinate {a} outside ({ax.lo}, {ax.hi})"
                )
            if margin is not None:
                m = margin[..., a]
                if np.any(x - m <= ax.lo) or np.any(x + m >= ax.hi):
                    raise StencilClipsBoundary(
                        f"{self.name}: finite-difference stencil on coordinate {a} crosses the boundary"
                    )


def _as_batch(chart: MetricChart, q) -> tuple[np.ndarray, tuple]:
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != chart.dim:
        raise ValueError(f"{chart.name}: expected points of dimension {chart.dim}, got shape {q.shape}")
    lead = q.shape[:-1]
    return q.reshape(-1, chart.dim), lead


def _check_positive(chart: MetricChart, g: np.ndarray) -> None:
    if not np.all(np.isfinite(g)):
        raise NonPositiveDefinite(f"{chart.name}: metric not finite")
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        raise NonPositiveDefinite(f"{chart.name}: metric has a non-positive eigenvalue") from None


def fd_steps(q: np.ndarray, order: int) -> np.ndarray:
    """Exactly representable per-axis steps for central differences."""
    base = FIRST_STEP if order == 1 else SECOND_STEP
    h = base * np.maximum(1.0, np.abs(q))
    return (q + h) - q


def fd_jet(func: Callable[[np.ndarray], np.ndarray], q: np.ndarray, order: int):
    """Central-difference jet of ``func`` at a batch of points ``q`` (B, n).

    ``func`` maps (P, n) -> (P, ...). Each difference quotient is
    Richardson-extrapolated once from steps h and 2h. Returns ``(f, d1, d2)``
    with the derivative indices appended last.
    """
    B, n = q.shape
    pts = [q[:, None, :]]
    h1 = fd_steps(q, 1)
    h2 = fd_steps(q, 2)
    eye = np.eye(n)
    if order >= 1:
        for k in (1.0, 2.0):
            off = k * h1[:, :, None] * eye[None]  # (B, n, n): row a = step along a
            pts += [q[:, None, :] + off, q[:, None, :] - off]
    if order >= 2:
        for k in (1.0, 2.0):
            off = k * h2[:, :, None] * eye[None]
            pts += [q[:, None, :] + off, q[:, None, :] - off]
        pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
        if pairs:
            ia = np.array([p[0] for p in pairs])
            ib = np.array([p[1] for p in pairs])
            for k in (1.0, 2.0):
                for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    off = np.zeros((B, len(pairs), n))
                    off[:, np.arange(len(pairs)), ia] = sa * k * h2[:, ia]
                    off[:, np.arange(len(pairs)), ib] = sb * k * h2[:, ib]
                    pts.append(q[:, None, :] + off)
    allpts = np.concatenate(pts, axis=1)
    P = allpts.shape[1]
    vals = np.asarray(func(allpts.reshape(-1, n)))
    tail = vals.shape[1:]
    vals = vals.reshape((B, P) + tail)

    f0 = vals[:, 0]
    pos = 1
    d1 = d2 = None
    if order >= 1:
        quot = []
        for k in (1.0, 2.0):
            plus, minus = vals[:, pos : pos + n], vals[:, pos + n : pos + 2 * n]
            pos += 2 * n
            hh = (k * h1).reshape((B, n) + (1,) * len(tail))
            quot.append((plus - minus) / (2 * hh))
        d1 = (4 * quot[0] - quot[1]) / 3  # (B, n, *tail)
        d1 = np.moveaxis(d1, 1, -1)
    if order >= 2:
        d2 = np.zeros((B,) + tail + (n, n), dtype=vals.dtype)
        quot = []
        for k in (1.0, 2.0):
            plus, minus = vals[:, pos : pos + n], vals[:, pos + n : pos + 2 * n]
            pos += 2 * n
            hh = (k * h2).reshape((B, n) + (1,) * len(tail))
            quot.append((plus - 2 * f0[:, None] + minus) / hh**2)
        diag = np.moveaxis((4 * quot[0] - quot[1]) / 3, 1, -1)
        for a in range(n):
            d2[..., a, a] = diag[..., a]
        npair = n * (n - 1) // 2
        if npair:
            mixed = []
            for k in (1.0, 2.0):
                pp, pm, mp, mm = (vals[:, pos + j * npair : pos + (j + 1) * npair] for j in range(4))
                pos += 4 * npair
                ha = (k * h2[:, ia]).reshape((B, npair) + (1,) * len(tail))
                hb = (k * h2[:, ib]).reshape((B, npair) + (1,) * len(tail))
                mixed.append((pp - pm - mp + mm) / (4 * ha * hb))
            mixed = np.moveaxis((4 * mixed[0] - mixed[1]) / 3, 1, -1)
            for j, (a, b) in enumerate(pairs):
                d2[..., a, b] = mixed[..., j]
                d2[..., b, a] = mixed[..., j]
    return f0, d1, d2


def stencil_margin(q: np.ndarray, order: int) -> np.ndarray:
    if order == 0:
        return np.zeros_like(q)
    return 2.0 * np.maximum(fd_steps(q, 1), fd_steps(q, 2) if order >= 2 else 0.0)


def metric_jet(chart: MetricChart, q, order: int = 0) -> MetricJet:
    """Metric components at ``q`` with partial derivatives up to ``order``."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    Q, lead = _as_batch(chart, q)
    numeric = chart.jet_eval is None and order > 0
    chart.check_domain(Q, stencil_margin(Q, order) if numeric else None)
    Q = chart.wrap(Q)
    n = chart.dim
    if order == 0:
        g = np.asarray(chart.metric_eval(Q), dtype=float)
        d1 = d2 = None
    elif chart.jet_eval is not None:
        g, d1, d2 = (np.asarray(x, dtype=float) for x in chart.jet_eval(Q))
        if order < 2:
            d2 = None
    else:
        g, d1, d2 = fd_jet(lambda P: chart.metric_eval(chart.wrap(P)), Q, order)
        g = 0.5 * (g + np.swapaxes(g, -1, -2))
        if d1 is not None:
            d1 = 0.5 * (d1 + np.swapaxes(d1, 1, 2))
        if d2 is not None:
            d2 = 0.5 * (d2 + np.swapaxes(d2, 1, 2))
    _check_positive(chart, g)

    def shaped(x, k):
        return None if x is None else x.reshape(lead + (n,) * k)

    return MetricJet(shaped(g, 2), shaped(d1, 3), shaped(d2, 4))


@dataclass(frozen=True)
class GeometryJet:
    point: np.ndarray
    metric: np.ndarray
    inverse_metric: np.ndarray
    det: np.ndarray
    christoffel: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar_curvature: np.ndarray
    christoffel_d: np.ndarray = field(repr=False, default=None)
    jet: MetricJet = field(repr=False, default=None)

    def lowered_riemann(self) -> np.ndarray:
        """R_abcd = omega_ae R^e_bcd."""
        return np.einsum("...ae,...ebcd->...abcd", self.metric, self.riemann)


def connection(jet: MetricJet, with_derivative: bool = True):
    """Inverse metric, Christoffel symbols and their first partials from a jet."""
    ginv = np.linalg.inv(jet.value)
    d1 = jet.d1
    low = np.einsum("...dcb->...dbc", d1) + d1 - np.einsum("...bcd->...dbc", d1)
    gamma = 0.5 * np.einsum("...ad,...dbc->...abc", ginv, low)
    if not with_derivative:
        return ginv, gamma, None
    d2 = jet.d2
    dginv = -np.einsum("...ap,...pqe,...qd->...ade", ginv, d1, ginv)
    dlow = (
        np.einsum("...dcbe->...dbce", d2)
        + d2
        - np.einsum("...bcde->...dbce", d2)
    )
    dgamma = 0.5 * (
        np.einsum("...ade,...dbc->...abce", dginv, low)
        + np.einsum("...ad,...dbce->...abce", ginv, dlow)
    )
    return ginv, gamma, dgamma


def geometry_jet(chart: MetricChart, q) -> GeometryJet:
    """Pointwise metric, connection and curvature at ``q``."""
    jet = metric_jet(chart, q, order=2)
    ginv, gamma, dgamma = connection(jet)
    riemann = (
        np.einsum("...adbc->...abcd", dgamma)
        - np.einsum("...acbd->...abcd", dgamma)
        + np.einsum("...ace,...edb->...abcd", gamma, gamma)
        - np.einsum("...ade,...ecb->...abcd", gamma, gamma)
    )
    ricci = np.einsum("...abad->...bd", riemann)
    ricci = 0.5 * (ricci + np.swapaxes(ricci, -1, -2))
    scalar = np.einsum("...bd,...bd->...", ginv, ricci)
    return GeometryJet(
        point=np.asarray(q, dtype=float),
        metric=jet.value,
        inverse_metric=ginv,
        det=np.linalg.det(jet.value),
        christoffel=gamma,
        riemann=riemann,
        ricci=ricci,
        scalar_curvature=scalar,
        christoffel_d=dgamma,
        jet=jet,
    )


# --- charts from symbolic metric components ---------------------------------


def _lambdify_array(exprs: Sequence[sp.Expr], symbols: Sequence[sp.Symbol], shape: tuple):
    fn = sp.lambdify(list(symbols), list(exprs), modules="numpy", cse=True)

    def evaluate(Q: np.ndarray) -> np.ndarray:
        args = [Q[:, i] for i in range(Q.shape[1])]
        vals = fn(*args)
        B = Q.shape[0]
        out = np.empty((B, len(exprs)))
        for k, v in enumerate(vals):
            out[:, k] = v
        return out.reshape((B,) + shape)

    return evaluate


def chart_from_sympy(
    symbols: Sequence[sp.Symbol],
    matrix: sp.Matrix,
    axes: Sequence[Axis],
    name: str = "symbolic",
    meta: dict | None = None,
) -> MetricChart:
    """ANALYTIC chart whose jets are exact symbolic partials of ``matrix``."""
    n = len(symbols)
    matrix = sp.Matrix(matrix)
    if matrix.shape != (n, n):
        raise ValueError("metric matrix shape does not match the coordinate count")
    if matrix != matrix.T:
        raise ValueError("metric components must be symmetric")
    g_exprs = [matrix[a, b] for a in range(n) for b in range(n)]
    d1_exprs = [sp.diff(matrix[a, b], symbols[c]) for a in range(n) for b in range(n) for c in range(n)]
    d2_exprs = [
        sp.diff(matrix[a, b], symbols[c], symbols[d])
        for a in range(n)
        for b in range(n)
        for c in range(n)
        for d in range(n)
    ]
    g_fn = _lambdify_array(g_exprs, symbols, (n, n))
    d1_fn = _lambdify_array(d1_exprs, symbols, (n, n, n))
    d2_fn = _lambdify_array(d2_exprs, symbols, (n, n, n, n))

    def jets(Q):
        return g_fn(Q), d1_fn(Q), d2_fn(Q)

    info = {"symbols": tuple(symbols), "matrix": matrix}
    info.update(meta or {})
    return MetricChart(n, tuple(axes), g_fn, jets, name, info)
