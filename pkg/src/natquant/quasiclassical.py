"""Quasi-classical two-point quantities of the free natural system.

``S(q, t | q', t') = m s(q, q')^2 / (2 dt)`` with ``s`` the geodesic distance
from the shooting solver, the Van Vleck determinant
``D = det(-d^2 S / dq^i dq'^j)`` by central differences of ``S``, and the
two-point potential

    V~ = (hbar^2/2m) d_i(omega^(1/2) omega^ij d_j F) / (omega^(1/4) D^(1/2)),
    F = omega^(-1/4) D^(1/2),

all derivatives in ``q`` at fixed ``(q', dt)``. Every difference quotient is
Richardson-extrapolated once (steps h and 2h) with ``h = max(s / 50, 2e-3)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NegativeDeterminant
from .geometry import Constants, MetricChart, geometry_jet, metric_jet
from .normal_coords import extrapolate_linear, integrate_geodesic, orthonormal_frame, shoot

STEP_FRACTION = 1.0 / 50.0
# below this the O(eps/h^4) rounding noise of nested differences beats the O(h^4) truncation
MIN_STEP = 2e-3
SHOOT_STEPS = 64


@dataclass(frozen=True)
class PropagatorSample:
    q: np.ndarray
    q_prime: np.ndarray
    t: float
    t_prime: float
    action: float
    van_vleck: float
    v_tilde: float


def _actions(chart, consts, Q, Qp, dt, steps=SHOOT_STEPS):
    res = shoot(chart, Qp, Q, steps=steps)
    return consts.mass * res.distance**2 / (2.0 * dt)


def classical_action(chart: MetricChart, consts: Constants, q, q_prime, dt: float, steps: int = SHOOT_STEPS):
    """Free action ``m s^2 / (2 dt)`` along the geodesic from ``q_prime`` to ``q``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    q = np.asarray(q, dtype=float)
    Q, Qp = np.broadcast_arrays(np.atleast_2d(q), np.atleast_2d(np.asarray(q_prime, dtype=float)))
    out = _actions(chart, consts, Q.copy(), Qp.copy(), dt, steps)
    return out.reshape(np.broadcast_shapes(q.shape, np.shape(q_prime))[:-1])


def _mixed_offsets(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit stencil for all mixed partials d^2/dq^i dq'^j at steps h and 2h."""
    dq, dqp = [], []
    for k in (1.0, 2.0):
        for i in range(n):
            for j in range(n):
                for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    a, b = np.zeros(n), np.zeros(n)
                    a[i], b[j] = si * k, sj * k
                    dq.append(a)
                    dqp.append(b)
    return np.array(dq), np.array(dqp)


def _van_vleck_batch(chart, consts, Q, Qp, dt, h):
    """D at a batch of (q, q') pairs; ``h`` is a per-pair step."""
    B, n = Q.shape
    h = np.broadcast_to(np.asarray(h, dtype=float), (B,))
    dq, dqp = _mixed_offsets(n)
    allQ = (Q[:, None, :] + h[:, None, None] * dq[None]).reshape(-1, n)
    allQp = (Qp[:, None, :] + h[:, None, None] * dqp[None]).reshape(-1, n)
    S = _actions(chart, consts, allQ, allQp, dt).reshape(B, 2, n, n, 4)
    hk = (h[:, None] * np.array([1.0, 2.0])).reshape(B, 2, 1, 1)
    mixed = (S[..., 0] - S[..., 1] - S[..., 2] + S[..., 3]) / (4 * hk**2)
    hess = (4 * mixed[:, 0] - mixed[:, 1]) / 3.0
    return np.linalg.det(-hess)


def step_for(separation) -> np.ndarray:
    """Difference step for a separation: s/50, floored where rounding noise would dominate."""
    return np.maximum(STEP_FRACTION * np.asarray(separation, dtype=float), MIN_STEP)


def _separations(chart, Q, Qp) -> np.ndarray:
    return shoot(chart, Qp, Q).distance


def van_vleck(chart: MetricChart, consts: Constants, q, q_prime, dt: float, h: float | None = None):
    """Van Vleck determinant ``det(-d^2 S / dq^i dq'^j)`` in the chart's coordinates."""
    q = np.asarray(q, dtype=float)
    Q, Qp = (a.copy() for a in np.broadcast_arrays(np.atleast_2d(q), np.atleast_2d(np.asarray(q_prime, dtype=float))))
    if h is None:
        h = step_for(_separations(chart, Q, Qp))
    D = _van_vleck_batch(chart, consts, Q, Qp, dt, h)
    if np.any(D <= 0):
        raise NegativeDeterminant(f"{chart.name}: Van Vleck determinant {D.min():.3g} <= 0")
    return float(D[0]) if q.ndim == 1 else D


def _jet_offsets(n: int) -> np.ndarray:
    """Unit stencil for value, gradient and Hessian in q (steps h, 2h)."""
    offs = [np.zeros(n)]
    eye = np.eye(n)
    for k in (1.0, 2.0):
        for i in range(n):
            offs += [k * eye[i], -k * eye[i]]
    for k in (1.0, 2.0):
        for i in range(n):
            for j in range(i + 1, n):
                for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    offs.append(k * (si * eye[i] + sj * eye[j]))
    return np.array(offs)


def _jet_from_stencil(vals: np.ndarray, n: int, h: float):
    f0 = vals[0]
    pos = 1
    grads, diags = [], []
    for k in (1.0, 2.0):
        plus = vals[pos : pos + 2 * n : 2]
        minus = vals[pos + 1 : pos + 2 * n : 2]
        pos += 2 * n
        grads.append((plus - minus) / (2 * k * h))
        diags.append((plus - 2 * f0 + minus) / (k * h) ** 2)
    grad = (4 * grads[0] - grads[1]) / 3
    hess = np.diag((4 * diags[0] - diags[1]) / 3)
    mixed = []
    for k in (1.0, 2.0):
        m = {}
        for i in range(n):
            for j in range(i + 1, n):
                pp, pm, mp, mm = vals[pos : pos + 4]
                pos += 4
                m[(i, j)] = (pp - pm - mp + mm) / (4 * (k * h) ** 2)
        mixed.append(m)
    for (i, j), v1 in mixed[0].items():
        hess[i, j] = hess[j, i] = (4 * v1 - mixed[1][(i, j)]) / 3
    return f0, grad, hess


def v_tilde(
    chart: MetricChart,
    consts: Constants,
    q,
    q_prime,
    dt: float,
    h: float | None = None,
    h_outer: float | None = None,
):
    """Two-point QMP ``V~(q, t | q', t')`` of the quasi-classical propagator.

    ``q`` may be a batch of points (B, n); all of them are solved together.
    ``h`` is the step for the mixed derivatives of S, ``h_outer`` the step for
    the q-derivatives of ``omega^(-1/4) D^(1/2)``.
    """
    q = np.asarray(q, dtype=float)
    n = chart.dim
    Q, Qp = (a.copy() for a in np.broadcast_arrays(np.atleast_2d(q), np.atleast_2d(np.asarray(q_prime, dtype=float))))
    B = Q.shape[0]
    s = _separations(chart, Q, Qp)
    h = step_for(s) if h is None else np.broadcast_to(float(h), (B,))
    H = step_for(s) if h_outer is None else np.broadcast_to(float(h_outer), (B,))
    offs = _jet_offsets(n)
    P = len(offs)
    Qs = (Q[:, None, :] + H[:, None, None] * offs[None]).reshape(-1, n)
    Qps = np.repeat(Qp, P, axis=0)
    D = _van_vleck_batch(chart, consts, Qs, Qps, dt, np.repeat(h, P))
    if np.any(D <= 0):
        raise NegativeDeterminant(f"{chart.name}: Van Vleck determinant {D.min():.3g} <= 0")
    w = np.linalg.det(metric_jet(chart, Qs, 0).value)
    F = (w ** (-0.25) * np.sqrt(D)).reshape(B, P)
    mj = metric_jet(chart, Q, 1)
    ginv = np.linalg.inv(mj.value)
    dginv = -np.einsum("pax,pxyc,pyb->pabc", ginv, mj.d1, ginv)
    ell = np.einsum("pab,pabc->pc", ginv, mj.d1)
    coef = np.einsum("paba->pb", dginv) + 0.5 * np.einsum("pab,pa->pb", ginv, ell)
    out = np.empty(B)
    for p in range(B):
        f0, grad, hess = _jet_from_stencil(F[p], n, H[p])
        lap = np.einsum("ab,ab->", ginv[p], hess) + coef[p] @ grad
        out[p] = consts.kinetic * lap / f0
    return float(out[0]) if q.ndim == 1 else out


def propagator_sample(chart, consts, q, q_prime, t: float, t_prime: float) -> PropagatorSample:
    dt = t - t_prime
    S = float(classical_action(chart, consts, q, q_prime, dt))
    D = van_vleck(chart, consts, q, q_prime, dt)
    V = v_tilde(chart, consts, q, q_prime, dt)
    return PropagatorSample(np.asarray(q), np.asarray(q_prime), t, t_prime, S, D, V)


def ray_points(chart: MetricChart, q0, separations, direction=None) -> np.ndarray:
    """Points at geodesic distance ``s_k`` from ``q0`` along one ray."""
    q0 = np.asarray(q0, dtype=float)
    n = chart.dim
    E = orthonormal_frame(metric_jet(chart, q0, 0).value)
    d = np.ones(n) if direction is None else np.asarray(direction, dtype=float)
    u = E @ (d / np.linalg.norm(d))
    out = []
    for s in np.atleast_1d(separations):
        geo = integrate_geodesic(chart, q0, u, float(s), float(s) / 256)
        out.append(geo.points[-1])
    return np.array(out)


@dataclass(frozen=True)
class CoincidenceLimit:
    value: float
    slope: float
    separations: np.ndarray
    samples: np.ndarray
    expected: float  # (hbar^2/2m) R(q0) / 6
    scalar_curvature: float

    @property
    def relative_error(self) -> float:
        if self.expected == 0:
            return abs(self.value)
        return abs(self.value - self.expected) / abs(self.expected)


def coincidence_limit(
    chart: MetricChart,
    consts: Constants,
    q0,
    separations=None,
    dt: float = 1.0,
    direction=None,
) -> CoincidenceLimit:
    """``V~`` at ``q`` approaching ``q' = q0`` along a geodesic ray, extrapolated to zero.

    Separations default to ``0.1 / 2^k``, k = 0..5; the fit is ``a + b s``.
    """
    seps = 0.1 / 2.0 ** np.arange(6) if separations is None else np.asarray(separations, dtype=float)
    pts = ray_points(chart, q0, seps, direction)
    vals = v_tilde(chart, consts, pts, q0, dt)
    a, b = extrapolate_linear(seps, vals)
    R = float(geometry_jet(chart, q0).scalar_curvature)
    return CoincidenceLimit(a, b, seps, vals, consts.kinetic * R / 6.0, R)
