"""Geodesics, the exponential map and normal (quasi-Cartesian) coordinates.

Geodesics are integrated with classical fixed-step RK4. The exponential map
``y -> q`` integrates ``q'' + Gamma(q', q') = 0`` over the unit parameter
interval from the origin with initial velocity ``E y`` (``E`` the orthonormal
frame), together with the linearised (Jacobi) equation, so its Jacobian is
available to rounding accuracy. The inverse map is Newton shooting on the
initial velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConjugatePointSuspected,
    FitIllConditioned,
    LeftDomain,
    PointOutsideDomain,
    ShootingDiverged,
    StepTooLarge,
)
from .geometry import (
    Axis,
    Constants,
    MetricChart,
    connection,
    geometry_jet,
    metric_jet,
    stencil_margin,
)
from .quantization import qmp_dewitt

ENERGY_DRIFT_TOL = 1e-8
SHOOT_TOL = 1e-10
SHOOT_MAX_ITER = 50
SHOOT_DAMPING = 0.5
CONDITION_LIMIT = 1e10


def _inside(chart: MetricChart, Q: np.ndarray, order: int) -> np.ndarray:
    """Mask of points where a metric jet of ``order`` can be evaluated."""
    ok = np.all(np.isfinite(Q), axis=-1)
    margin = stencil_margin(Q, order) if chart.jet_eval is None else np.zeros_like(Q)
    for a, ax in enumerate(chart.axes):
        if ax.periodic:
            continue
        x, m = Q[:, a], margin[:, a]
        ok &= (x - m > ax.lo) & (x + m < ax.hi)
    return ok


def _rhs(chart, q, v, Jq, Jv, jac: bool):
    jet = metric_jet(chart, q, order=2 if jac else 1)
    _, gamma, dgamma = connection(jet, with_derivative=jac)
    acc = -np.einsum("pabc,pb,pc->pa", gamma, v, v)
    if not jac:
        return v, acc, None, None
    dJv = -np.einsum("pabce,pb,pc,pek->pak", dgamma, v, v, Jq) - 2.0 * np.einsum(
        "pabc,pb,pck->pak", gamma, v, Jv
    )
    return v, acc, Jv, dJv


def _flow(chart: MetricChart, q0, v0, steps: int, jac: bool = False, record: bool = False):
    """RK4 over the unit parameter interval for a batch of geodesics.

    Returns ``(q, v, Jq, Jv, valid, history)``; ``Jq[p, :, k] = dq(1)/dv0_k``.
    Trajectories that leave the chart are frozen and flagged invalid.
    """
    q = np.array(q0, dtype=float)
    v = np.array(v0, dtype=float)
    B, n = q.shape
    Jq = np.zeros((B, n, n)) if jac else None
    Jv = np.broadcast_to(np.eye(n), (B, n, n)).copy() if jac else None
    valid = _inside(chart, q, 2 if jac else 1)
    h = 1.0 / steps
    history = [(q.copy(), v.copy())] if record else None
    order = 2 if jac else 1

    def stage(qs, vs, Jqs, Jvs):
        nonlocal valid
        ok = _inside(chart, qs, order)
        valid &= ok
        qs = np.where(valid[:, None], qs, q0)
        return _rhs(chart, qs, vs, Jqs, Jvs, jac)

    for _ in range(steps):
        k1 = stage(q, v, Jq, Jv)
        k2 = stage(q + 0.5 * h * k1[0], v + 0.5 * h * k1[1],
                   Jq + 0.5 * h * k1[2] if jac else None, Jv + 0.5 * h * k1[3] if jac else None)
        k3 = stage(q + 0.5 * h * k2[0], v + 0.5 * h * k2[1],
                   Jq + 0.5 * h * k2[2] if jac else None, Jv + 0.5 * h * k2[3] if jac else None)
        k4 = stage(q + h * k3[0], v + h * k3[1],
                   Jq + h * k3[2] if jac else None, Jv + h * k3[3] if jac else None)
        q = q + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        v = v + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if jac:
            Jq = Jq + h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            Jv = Jv + h / 6.0 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
        valid &= _inside(chart, q, order)
        q = np.where(valid[:, None], q, q0)
        if record:
            history.append((q.copy(), v.copy()))
    return q, v, Jq, Jv, valid, history


def _norm2(chart: MetricChart, q: np.ndarray, v: np.ndarray) -> np.ndarray:
    g = metric_jet(chart, q, 0).value
    return np.einsum("...a,...ab,...b->...", v, g, v)


@dataclass(frozen=True)
class Geodesic:
    start: np.ndarray
    velocity: np.ndarray
    samples: list = field(repr=False)

    @property
    def s(self) -> np.ndarray:
        return np.array([smp[0] for smp in self.samples])

    @property
    def points(self) -> np.ndarray:
        return np.array([smp[1] for smp in self.samples])

    @property
    def velocities(self) -> np.ndarray:
        return np.array([smp[2] for smp in self.samples])


def integrate_geodesic(chart: MetricChart, start, velocity, s_max: float, step: float) -> Geodesic:
    """Arc-length geodesic from ``start`` with unit (omega-norm) initial velocity."""
    start = np.asarray(start, dtype=float)
    velocity = np.asarray(velocity, dtype=float)
    norm = math.sqrt(float(_norm2(chart, start, velocity)))
    if norm == 0.0:
        raise ValueError("initial velocity must be nonzero")
    u = velocity / norm
    steps = max(1, int(math.ceil(s_max / step - 1e-12)))
    # unit parameter interval with velocity s_max*u is arc length s_max
    q, v, _, _, valid, hist = _flow(chart, start[None], (s_max * u)[None], steps, record=True)
    if not valid[0]:
        raise LeftDomain(f"{chart.name}: geodesic left the chart before s = {s_max}")
    samples = []
    for k, (qk, vk) in enumerate(hist):
        samples.append((s_max * k / steps, chart.wrap(qk[0]), vk[0] / s_max))
    pts = np.array([smp[1] for smp in samples])
    vel = np.array([smp[2] for smp in samples])
    drift = np.max(np.abs(_norm2(chart, pts, vel) - 1.0))
    if drift > ENERGY_DRIFT_TOL * max(1.0, s_max):
        raise StepTooLarge(f"speed drift {drift:.3g} along the geodesic; reduce the step")
    return Geodesic(start, u, samples)


@dataclass(frozen=True)
class ShootingResult:
    velocity: np.ndarray  # initial velocity over the unit interval; its norm is the distance
    distance: np.ndarray
    iterations: int
    residual: np.ndarray
    jacobian: np.ndarray


def shoot(
    chart: MetricChart,
    q_from,
    q_to,
    steps: int = 64,
    tol: float = SHOOT_TOL,
    max_iter: int = SHOOT_MAX_ITER,
    v_guess=None,
) -> ShootingResult:
    """Initial velocities ``v`` with ``exp_{q_from}(v) = q_to`` (batched).

    Damped Newton: the step is halved while the omega-norm residual grows.
    After convergence one more undamped Newton step is taken so that the
    result is accurate to rounding (distance derivatives are differenced
    downstream).
    """
    Qf = np.atleast_2d(np.asarray(q_from, dtype=float))
    Qt = np.atleast_2d(np.asarray(q_to, dtype=float))
    Qf, Qt = np.broadcast_arrays(Qf, Qt)
    Qf, Qt = Qf.copy(), Qt.copy()
    B, n = Qf.shape
    gt = metric_jet(chart, Qt, 0).value
    v = chart.difference(Qt, Qf) if v_guess is None else np.array(np.broadcast_to(v_guess, Qf.shape))

    def evaluate(idx, vv):
        q, _, Jq, _, ok, _ = _flow(chart, Qf[idx], vv, steps, jac=True)
        r = chart.difference(q, Qt[idx])
        res = np.sqrt(np.abs(np.einsum("pa,pab,pb->p", r, gt[idx], r)))
        res = np.where(ok, res, np.inf)
        return r, res, Jq

    all_idx = np.arange(B)
    r, res, J = evaluate(all_idx, v)
    converged = res < tol
    it = 0
    while not np.all(converged):
        it += 1
        if it > max_iter:
            raise ShootingDiverged(
                f"{chart.name}: shooting did not converge in {max_iter} iterations "
                f"(worst residual {np.max(res[~converged]):.3g})"
            )
        idx = np.flatnonzero(~converged)
        if np.any(~np.isfinite(res[idx])):
            raise ShootingDiverged(f"{chart.name}: shooting trajectory left the chart")
        _check_conditioning(chart, J[idx])
        dv = np.linalg.solve(J[idx], r[idx][..., None])[..., 0]
        alpha = np.ones(len(idx))
        for _ in range(30):
            trial = v[idx] - alpha[:, None] * dv
            r_t, res_t, J_t = evaluate(idx, trial)
            worse = ~(res_t <= res[idx])
            if not np.any(worse):
                break
            alpha = np.where(worse, alpha * SHOOT_DAMPING, alpha)
            # accept the improved members now, retry the rest
            good = idx[~worse]
            v[good], r[good], res[good], J[good] = trial[~worse], r_t[~worse], res_t[~worse], J_t[~worse]
            idx, dv, alpha = idx[worse], dv[worse], alpha[worse]
        else:
            raise ShootingDiverged(f"{chart.name}: damping could not reduce the shooting residual")
        v[idx], r[idx], res[idx], J[idx] = trial, r_t, res_t, J_t
        converged = res < tol

    # polish: one undamped Newton step, kept only where it does not hurt
    _check_conditioning(chart, J)
    dv = np.linalg.solve(J, r[..., None])[..., 0]
    trial = v - dv
    r_t, res_t, J_t = evaluate(all_idx, trial)
    keep = res_t <= res
    v[keep], res[keep], J[keep] = trial[keep], res_t[keep], J_t[keep]
    dist = np.sqrt(_norm2(chart, Qf, v))
    return ShootingResult(v, dist, it, res, J)


def _check_conditioning(chart: MetricChart, J: np.ndarray) -> None:
    if len(J) and np.max(np.linalg.cond(J)) > CONDITION_LIMIT:
        raise ConjugatePointSuspected(f"{chart.name}: shooting Jacobian is near-singular")


def orthonormal_frame(g0: np.ndarray) -> np.ndarray:
    """Frame ``E`` with ``E^T g0 E = I`` from the lower Cholesky factor of ``g0``."""
    L = np.linalg.cholesky(g0)
    return np.linalg.inv(L).T


@dataclass(frozen=True)
class NormalChart:
    base: MetricChart
    origin: np.ndarray
    frame: np.ndarray
    radius: float
    steps: int

    def _velocity(self, y: np.ndarray) -> np.ndarray:
        return np.einsum("ab,pb->pa", self.frame, y)

    def forward(self, y) -> np.ndarray:
        """``q = exp_{origin}(E y)``."""
        y = np.asarray(y, dtype=float)
        Y = y.reshape(-1, self.base.dim)
        Q0 = np.broadcast_to(self.origin, Y.shape)
        q, _, _, _, ok, _ = _flow(self.base, Q0, self._velocity(Y), self.steps)
        if not np.all(ok):
            raise LeftDomain(f"{self.base.name}: exponential map left the chart")
        return self.base.wrap(q).reshape(y.shape)

    def forward_with_jacobian(self, Y: np.ndarray):
        Q0 = np.broadcast_to(self.origin, Y.shape)
        q, _, Jq, _, ok, _ = _flow(self.base, Q0, self._velocity(Y), self.steps, jac=True)
        if not np.all(ok):
            raise LeftDomain(f"{self.base.name}: exponential map left the chart")
        return q, Jq @ self.frame

    def pullback_metric(self, y) -> np.ndarray:
        """Metric components in the normal coordinates ``y``."""
        y = np.asarray(y, dtype=float)
        Y = y.reshape(-1, self.base.dim)
        q, J = self.forward_with_jacobian(Y)
        g = metric_jet(self.base, q, 0).value
        out = np.einsum("pak,pab,pbl->pkl", J, g, J)
        return out.reshape(y.shape + (self.base.dim,))

    def inverse(self, q, tol: float = SHOOT_TOL, max_iter: int = SHOOT_MAX_ITER) -> np.ndarray:
        """Normal coordinates of ``q`` by shooting from the origin."""
        q = np.asarray(q, dtype=float)
        Q = q.reshape(-1, self.base.dim)
        res = shoot(self.base, self.origin, Q, self.steps, tol, max_iter)
        y = np.linalg.solve(self.frame, res.velocity.T).T
        return y.reshape(q.shape)

    @property
    def chart(self) -> MetricChart:
        """The normal coordinates as a chart (NUMERIC jets) on the box |y_i| < radius."""
        n = self.base.dim
        return MetricChart(
            n,
            (Axis(-self.radius, self.radius),) * n,
            self.pullback_metric,
            None,
            f"normal[{self.base.name}@{np.array2string(self.origin, precision=6)}]",
        )


def build_normal_chart(chart: MetricChart, q0, radius: float, resolution: int = 1000) -> NormalChart:
    """Normal coordinates at ``q0`` valid out to geodesic distance ``radius``.

    ``resolution`` is the number of RK4 steps per exponential-map evaluation,
    so the arc-length step never exceeds ``radius / resolution``.
    """
    q0 = np.asarray(q0, dtype=float)
    if radius <= 0 or resolution < 1:
        raise ValueError("radius and resolution must be positive")
    try:
        g0 = metric_jet(chart, q0, 0).value
    except PointOutsideDomain as exc:
        raise LeftDomain(str(exc)) from None
    E = orthonormal_frame(g0)
    nc = NormalChart(chart, q0, E, float(radius), int(resolution))
    n = chart.dim
    dirs = np.concatenate([np.eye(n), -np.eye(n)]) * radius
    nc.forward(dirs)  # raises LeftDomain when the ball does not fit in the chart
    return nc


@dataclass(frozen=True)
class ExpansionFit:
    coefficients: np.ndarray  # C[i, k, j, l]: g_ij - delta_ij = C_ikjl y^k y^l
    predicted: np.ndarray  # -(1/3) R_(ikjl), symmetrised in (k, l)
    fit_radius: float

    @property
    def max_error(self) -> float:
        return float(np.max(np.abs(self.coefficients - self.predicted)))

    @property
    def relative_error(self) -> float:
        scale = np.max(np.abs(self.predicted))
        return self.max_error / scale if scale > 0 else self.max_error


def _fit_samples(n: int, fit_radius: float) -> np.ndarray:
    dirs = [np.eye(n)[i] for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            for s in (1.0, -1.0):
                d = np.zeros(n)
                d[i], d[j] = 1.0, s
                dirs.append(d / math.sqrt(2.0))
    dirs = np.array(dirs)
    dirs = np.concatenate([dirs, -dirs])
    fracs = np.array([0.25, 0.5, 0.75, 1.0])
    return (fracs[:, None, None] * dirs[None]).reshape(-1, n) * fit_radius


def frame_riemann(nc: NormalChart) -> tuple[np.ndarray, float]:
    """Lowered Riemann tensor at the origin in the orthonormal frame, and R."""
    gj = geometry_jet(nc.base, nc.origin)
    R = gj.lowered_riemann()
    E = nc.frame
    Rf = np.einsum("pa,qb,rc,sd,pqrs->abcd", E, E, E, E, R)
    return Rf, float(gj.scalar_curvature)


def metric_expansion_fit(nc: NormalChart, fit_radius: float) -> ExpansionFit:
    """Least-squares quadratic fit of the normal-coordinate metric about y = 0."""
    n = nc.base.dim
    if not 0 < fit_radius <= nc.radius:
        raise ValueError("fit_radius must lie in (0, radius]")
    Y = _fit_samples(n, fit_radius)
    G = nc.pullback_metric(Y) - np.eye(n)
    pairs = [(k, l) for k in range(n) for l in range(k, n)]
    X = np.stack([Y[:, k] * Y[:, l] for k, l in pairs], axis=1)
    Xs = X / fit_radius**2
    if np.linalg.cond(Xs) > 1e8:
        raise FitIllConditioned("quadratic design matrix is ill-conditioned")
    coef, *_ = np.linalg.lstsq(Xs, G.reshape(len(Y), n * n), rcond=None)
    coef = coef.reshape(len(pairs), n, n) / fit_radius**2
    C = np.zeros((n, n, n, n))
    for p, (k, l) in enumerate(pairs):
        c = coef[p]
        if k == l:
            C[:, k, :, l] = c
        else:
            C[:, k, :, l] = 0.5 * c
            C[:, l, :, k] = 0.5 * c
    Rf, _ = frame_riemann(nc)
    pred = -(1.0 / 3.0) * 0.5 * (Rf + np.einsum("iljk->ikjl", Rf))
    return ExpansionFit(C, pred, float(fit_radius))


@dataclass(frozen=True)
class NormalAsymptote:
    value: float  # extrapolated QMP at y = 0
    slope: float
    radii: np.ndarray
    samples: np.ndarray
    expected_magnitude: float  # (hbar^2/2m) |R| / 6
    scalar_curvature: float

    @property
    def sign(self) -> int:
        """Empirical sign of the extrapolated QMP relative to +(hbar^2/2m) R/6."""
        if abs(self.value) < 1e-6 or self.scalar_curvature == 0:
            return 0
        return int(np.sign(self.value) * np.sign(self.scalar_curvature))

    @property
    def relative_error(self) -> float:
        return abs(abs(self.value) - self.expected_magnitude) / self.expected_magnitude


def extrapolate_linear(r: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    """Least-squares ``v = a + b r``; returns ``(a, b)``."""
    A = np.stack([np.ones_like(r), r], axis=1)
    (a, b), *_ = np.linalg.lstsq(A, v, rcond=None)
    return float(a), float(b)


def qmp_normal_asymptote(
    chart: MetricChart,
    consts: Constants,
    q0,
    radii=None,
    direction=None,
    resolution: int = 1000,
) -> NormalAsymptote:
    """DeWitt QMP in normal coordinates at ``q0``, extrapolated to the origin.

    The QMP is evaluated at ``y = r_k * direction`` for the given radii
    (default ``0.1 / 2^k``, k = 0..5) and fitted by ``a + b r``.
    """
    q0 = np.asarray(q0, dtype=float)
    n = chart.dim
    radii = 0.1 / 2.0 ** np.arange(6) if radii is None else np.asarray(radii, dtype=float)
    d = np.ones(n) if direction is None else np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    nc = build_normal_chart(chart, q0, 2.0 * float(np.max(radii)), resolution)
    vals = qmp_dewitt(nc.chart, consts, radii[:, None] * d[None]).v_dw
    a, b = extrapolate_linear(radii, vals)
    R = float(geometry_jet(chart, q0).scalar_curvature)
    return NormalAsymptote(a, b, radii, vals, consts.kinetic * abs(R) / 6.0, R)
