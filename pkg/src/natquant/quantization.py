"""Canonical quantization of a natural system in a fixed chart.

Operators act on wave functions in the space with measure
``omega^(1/2) d^n q``:

* momentum ``p_b = -i hbar (d_b + (1/4) d_b ln omega)``;
* Laplace-Beltrami ``omega^(-1/2) d_a (omega^(1/2) omega^ab d_b)``;
* DeWitt QMP ``-(hbar^2/2m) omega^(-1/4) d_a (omega^ab d_b omega^(1/4))``, built
  from plain partials, so it depends on the chart;
* the ordering family ``H(nu) = H(Sch) + V_dw + (nu - 2)(hbar^2/8m) d_a d_b omega^ab``.

``omega`` is ``det omega_ab``. All functions accept a point or a batch of points.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np
import sympy as sp

from .errors import NotNormalized
from .geometry import Constants, MetricChart, MetricJet, fd_jet, metric_jet


@dataclass(frozen=True)
class QmpValue:
    point: np.ndarray
    v_dw: np.ndarray
    nu_correction_density: np.ndarray
    v_ext: np.ndarray


@dataclass(frozen=True)
class ScalarField:
    """Complex wave function (or real potential) on a chart.

    ``evaluator`` maps points (B, n) to values (B,). ``grad`` (B, n) and
    ``hess`` (B, n, n) are optional exact partials; missing ones come from
    the shared finite-difference backend.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    hess: Callable[[np.ndarray], np.ndarray] | None = None

    @classmethod
    def from_sympy(cls, expr, symbols) -> "ScalarField":
        symbols = list(symbols)
        n = len(symbols)
        f = sp.lambdify(symbols, expr, "numpy")
        g = sp.lambdify(symbols, [sp.diff(expr, s) for s in symbols], "numpy")
        h = sp.lambdify(symbols, [sp.diff(expr, s, t) for s in symbols for t in symbols], "numpy")

        def stack(vals, B, shape):
            out = np.empty((B, len(vals)), dtype=complex)
            for k, v in enumerate(vals):
                out[:, k] = v
            return out.reshape((B,) + shape)

        return cls(
            lambda Q: np.broadcast_to(np.asarray(f(*Q.T), dtype=complex), Q.shape[:1]).copy(),
            lambda Q: stack(g(*Q.T), Q.shape[0], (n,)),
            lambda Q: stack(h(*Q.T), Q.shape[0], (n, n)),
        )

    @classmethod
    def constant(cls, value: complex = 1.0) -> "ScalarField":
        return cls(
            lambda Q: np.full(Q.shape[0], value, dtype=complex),
            lambda Q: np.zeros(Q.shape, dtype=complex),
            lambda Q: np.zeros(Q.shape + Q.shape[-1:], dtype=complex),
        )

    def jet(self, Q: np.ndarray, order: int):
        """Value and partials to ``order`` at a batch (B, n)."""
        Q = np.asarray(Q, dtype=float)
        f = np.asarray(self.evaluator(Q), dtype=complex)
        if order == 0:
            return f, None, None
        have = self.grad is not None and (order < 2 or self.hess is not None)
        if have:
            d1 = np.asarray(self.grad(Q), dtype=complex)
            d2 = np.asarray(self.hess(Q), dtype=complex) if order >= 2 else None
            return f, d1, d2
        _, d1, d2 = fd_jet(lambda P: np.asarray(self.evaluator(P), dtype=complex), Q, order)
        return f, d1, d2


ZERO_FIELD = ScalarField.constant(0.0)


@dataclass(frozen=True)
class Variant:
    """Operator ordering: ``SCH``, ``DW`` or ``NU`` with parameter ``nu``."""

    kind: str
    nu: float | None = None

    def __post_init__(self):
        if self.kind not in ("SCH", "DW", "NU"):
            raise ValueError(f"unknown variant {self.kind!r}")
        if (self.kind == "NU") != (self.nu is not None):
            raise ValueError("NU variant needs nu, other variants must not set it")

    @classmethod
    def parse(cls, text: "str | Variant") -> "Variant":
        if isinstance(text, Variant):
            return text
        t = text.strip().upper()
        if t in ("SCH", "DW"):
            return cls(t)
        m = re.fullmatch(r"NU\(?\s*([-+0-9.eE]+)\s*\)?", t)
        if m:
            return cls("NU", float(m.group(1)))
        raise ValueError(f"cannot parse variant {text!r}")

    def __str__(self) -> str:
        return f"NU({self.nu:g})" if self.kind == "NU" else self.kind


# --- metric-derived pieces ------------------------------------------------------


def _inverse_derivs(jet: MetricJet):
    ginv = np.linalg.inv(jet.value)
    dginv = -np.einsum("...ap,...pqc,...qb->...abc", ginv, jet.d1, ginv)
    return ginv, dginv


def _log_det_derivs(ginv, dginv, jet: MetricJet):
    ell = np.einsum("...ab,...abc->...c", ginv, jet.d1)
    if jet.d2 is None:
        return ell, None
    ell2 = np.einsum("...abd,...abc->...cd", dginv, jet.d1) + np.einsum(
        "...ab,...abcd->...cd", ginv, jet.d2
    )
    return ell, 0.5 * (ell2 + np.swapaxes(ell2, -1, -2))


def qmp_from_jet(jet: MetricJet, consts: Constants):
    """DeWitt QMP and the nu-correction density from a second-order metric jet."""
    ginv, dginv = _inverse_derivs(jet)
    ell, ell2 = _log_det_derivs(ginv, dginv, jet)
    div_ginv = np.einsum("...aba->...b", dginv)
    # omega^(-1/4) d_a (omega^ab d_b omega^(1/4))
    bracket = 0.25 * np.einsum("...b,...b->...", div_ginv, ell) + np.einsum(
        "...ab,...ab->...", ginv, ell[..., :, None] * ell[..., None, :] / 16.0 + 0.25 * ell2
    )
    v_dw = -consts.kinetic * bracket
    # d_a d_b omega^ab
    d1, d2 = jet.d1, jet.d2
    term = (
        np.einsum("...pqa,...qr,...rsb->...psab", d1, ginv, d1)
        + np.einsum("...pqb,...qr,...rsa->...psab", d1, ginv, d1)
        - d2
    )
    dd_ginv = np.einsum("...ap,...psab,...sb->...", ginv, term, ginv)
    nu_density = consts.hbar**2 / (8.0 * consts.mass) * dd_ginv
    return v_dw, nu_density


def _eval_potential(v_ext: ScalarField | None, Q: np.ndarray) -> np.ndarray:
    if v_ext is None:
        return np.zeros(Q.shape[0])
    return np.real(np.asarray(v_ext.evaluator(Q)))


def _batch(chart: MetricChart, q):
    q = np.asarray(q, dtype=float)
    return q.reshape(-1, chart.dim), q.shape[:-1]


def qmp_dewitt(
    chart: MetricChart, consts: Constants, q, v_ext: ScalarField | None = None
) -> QmpValue:
    """DeWitt QMP, nu-correction density and the external potential at ``q``."""
    Q, lead = _batch(chart, q)
    jet = metric_jet(chart, Q, order=2)
    v_dw, dens = qmp_from_jet(jet, consts)
    return QmpValue(
        point=np.asarray(q, dtype=float),
        v_dw=v_dw.reshape(lead),
        nu_correction_density=dens.reshape(lead),
        v_ext=_eval_potential(v_ext, Q).reshape(lead),
    )


def qmp_nu(chart: MetricChart, consts: Constants, q, nu: float) -> np.ndarray:
    """QMP of the ordering with parameter ``nu`` (``nu = 2`` is DeWitt's)."""
    val = qmp_dewitt(chart, consts, q)
    if nu == 2:
        return val.v_dw
    return val.v_dw + (nu - 2.0) * val.nu_correction_density


def variant_potential(chart: MetricChart, consts: Constants, variant, q) -> np.ndarray:
    """Diagonal potential added to the Schroedinger Hamiltonian by ``variant``."""
    variant = Variant.parse(variant)
    q = np.asarray(q, dtype=float)
    if variant.kind == "SCH":
        return np.zeros(q.shape[:-1])
    if variant.kind == "DW":
        return qmp_dewitt(chart, consts, q).v_dw
    return qmp_nu(chart, consts, q, variant.nu)


def apply_momentum(chart: MetricChart, consts: Constants, b: int, psi: ScalarField, q) -> np.ndarray:
    """``(p_b psi)(q)``."""
    Q, lead = _batch(chart, q)
    jet = metric_jet(chart, Q, order=1)
    ginv = np.linalg.inv(jet.value)
    ell = np.einsum("...ab,...abc->...c", ginv, jet.d1)
    f, df, _ = psi.jet(chart.wrap(Q), 1)
    out = -1j * consts.hbar * (df[:, b] + 0.25 * ell[:, b] * f)
    return out.reshape(lead)


def _laplace_beltrami(jet: MetricJet, f, df, d2f):
    ginv, dginv = _inverse_derivs(jet)
    ell = np.einsum("...ab,...abc->...c", ginv, jet.d1)
    div_ginv = np.einsum("...aba->...b", dginv)
    coef = div_ginv + 0.5 * np.einsum("...ab,...a->...b", ginv, ell)
    return np.einsum("...ab,...ab->...", ginv, d2f) + np.einsum("...b,...b->...", coef, df)


def apply_laplace_beltrami(chart: MetricChart, psi: ScalarField, q) -> np.ndarray:
    """``(Delta psi)(q)`` with the Laplace-Beltrami operator of the chart metric."""
    Q, lead = _batch(chart, q)
    jet = metric_jet(chart, Q, order=1)
    f, df, d2f = psi.jet(chart.wrap(Q), 2)
    return _laplace_beltrami(jet, f, df, d2f).reshape(lead)


def apply_hamiltonian(
    chart: MetricChart,
    consts: Constants,
    variant,
    v_ext: ScalarField | None,
    psi: ScalarField,
    q,
) -> np.ndarray:
    """``(H psi)(q)`` for the SCH, DW or NU(nu) ordering."""
    variant = Variant.parse(variant)
    Q, lead = _batch(chart, q)
    Qw = chart.wrap(Q)
    jet = metric_jet(chart, Q, order=2)
    f, df, d2f = psi.jet(Qw, 2)
    out = -consts.kinetic * _laplace_beltrami(jet, f, df, d2f) + _eval_potential(v_ext, Qw) * f
    if variant.kind != "SCH":
        v_dw, dens = qmp_from_jet(jet, consts)
        pot = v_dw if variant.kind == "DW" else v_dw + (variant.nu - 2.0) * dens
        out = out + pot * f
    return out.reshape(lead)


def energy_functional(
    chart: MetricChart,
    consts: Constants,
    v_ext: ScalarField | None,
    psi,
    grid,
    variant="DW",
    norm_tol: float = 1e-6,
) -> float:
    """Energy mean value of a normalized wave function.

    For a :class:`ScalarField` the integrand is the kinetic density written
    with the momentum operators, ``(1/2m) conj(p_a psi) omega^ab (p_b psi)``,
    plus ``V_ext |psi|^2``, integrated with the grid's quadrature. Integrating
    by parts once turns it into ``<psi, H(DW) psi>``. ``variant="SCH"`` uses
    plain partials instead (Schroedinger's original form, equal to
    ``<psi, H(Sch) psi>``); ``NU(nu)`` adds the ordering correction.

    For an array of nodal values the discrete quadratic form of the
    :func:`natquant.spectral.discretize` matrix is returned, i.e. the same
    identity after summation by parts on the grid.
    """
    variant = Variant.parse(variant)
    if not isinstance(psi, ScalarField):
        from .spectral import dirichlet_form

        return dirichlet_form(chart, consts, variant, v_ext, np.asarray(psi), grid, norm_tol)

    pts, weights = grid.measure(chart)
    norm = float(np.sum(weights * np.abs(psi.evaluator(pts)) ** 2))
    if abs(norm - 1.0) > norm_tol:
        raise NotNormalized(f"norm of psi is {norm:.12g}, expected 1")
    jet = metric_jet(chart, pts, order=2 if variant.kind == "NU" else 1)
    ginv = np.linalg.inv(jet.value)
    f, df, _ = psi.jet(pts, 1)
    if variant.kind == "SCH":
        grad = df
    else:
        ell = np.einsum("...ab,...abc->...c", ginv, jet.d1)
        grad = df + 0.25 * ell * f[:, None]
    kinetic = consts.kinetic * np.real(np.einsum("pa,pab,pb->p", np.conj(grad), ginv, grad))
    density = kinetic + _eval_potential(v_ext, pts) * np.abs(f) ** 2
    if variant.kind == "NU":
        _, dens = qmp_from_jet(jet, consts)
        density = density + (variant.nu - 2.0) * dens * np.abs(f) ** 2
    return float(np.sum(weights * density))


@dataclass(frozen=True)
class ConformalComparison:
    n: int
    coefficient: Fraction
    reference: Fraction
    equal: bool


def conformal_coefficient(n: int) -> ConformalComparison:
    """Conformal-coupling coefficient (n-1)/(4n) against the asymptotic QMP's 1/6."""
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    coef = Fraction(int(n) - 1, 4 * int(n))
    ref = Fraction(1, 6)
    return ConformalComparison(int(n), coef, ref, coef == ref)


@dataclass(frozen=True)
class PairingCheck:
    forward: complex  # <phi, A psi>
    backward: complex  # <A phi, psi>

    @property
    def defect(self) -> float:
        scale = max(abs(self.forward), abs(self.backward), 1e-300)
        return abs(self.forward - self.backward) / scale


def symmetric_pairing(chart: MetricChart, operator: Callable, phi: ScalarField, psi: ScalarField, grid) -> PairingCheck:
    """Both sides of ``<phi, A psi> = <A phi, psi>`` in the measure ``omega^(1/2) d^n q``.

    ``operator(field, points)`` applies A to a scalar field at grid nodes.
    """
    pts, weights = grid.measure(chart)
    fwd = np.sum(weights * np.conj(phi.evaluator(pts)) * operator(psi, pts))
    bwd = np.sum(weights * np.conj(operator(phi, pts)) * psi.evaluator(pts))
    return PairingCheck(complex(fwd), complex(bwd))
