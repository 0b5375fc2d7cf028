"""Built-in chart catalog, addressable by string id.

=========================  ==================================================
id                         metric
=========================  ==================================================
``cartesian:n``            identity on R^n
``polar2``                 diag(1, r^2), r > 0, phi periodic
``sphere2:a``              a^2 diag(1, sin^2 theta)
``sphere3:a``              a^2 diag(1, sin^2 chi, sin^2 chi sin^2 theta)
``circle-deformed:eps``    (1 + eps cos q)^2 on the periodic circle [0, 2 pi)
``plane-deformed:eps:f``   flat plane in q = x + eps f(x); f as in
                           :func:`natquant.deformation.deformation_field`
``file:PATH``              metric expression file (see ``expressions``)
=========================  ==================================================
"""

from __future__ import annotations

import math
from functools import lru_cache

import sympy as sp

from .deformation import deformation_field, deformed_chart
from .expressions import read_metric_file
from .geometry import Axis, MetricChart, chart_from_sympy

TWO_PI = 2.0 * math.pi


def _syms(names: str):
    return sp.symbols(names, real=True, seq=True)


def cartesian(n: int) -> MetricChart:
    if n < 1:
        raise ValueError("dimension must be positive")
    xs = _syms(" ".join(f"x{i + 1}" for i in range(n)))
    return chart_from_sympy(xs, sp.eye(n), (Axis(),) * n, f"cartesian:{n}")


def polar2() -> MetricChart:
    r, phi = _syms("r phi")
    return chart_from_sympy(
        (r, phi), sp.diag(1, r**2), (Axis(0.0, math.inf), Axis(0.0, TWO_PI, True)), "polar2"
    )


def sphere2(a: float = 1.0) -> MetricChart:
    th, ph = _syms("theta phi")
    a2 = sp.nsimplify(a) ** 2
    return chart_from_sympy(
        (th, ph),
        a2 * sp.diag(1, sp.sin(th) ** 2),
        (Axis(0.0, math.pi), Axis(0.0, TWO_PI, True)),
        f"sphere2:{a:g}",
        {"scalar_curvature": 2.0 / a**2},
    )


def sphere3(a: float = 1.0) -> MetricChart:
    chi, th, ph = _syms("chi theta phi")
    a2 = sp.nsimplify(a) ** 2
    s = sp.sin(chi) ** 2
    return chart_from_sympy(
        (chi, th, ph),
        a2 * sp.diag(1, s, s * sp.sin(th) ** 2),
        (Axis(0.0, math.pi), Axis(0.0, math.pi), Axis(0.0, TWO_PI, True)),
        f"sphere3:{a:g}",
        {"scalar_curvature": 6.0 / a**2},
    )


def circle_deformed(eps: float) -> MetricChart:
    """Circle of length 2 pi in a coordinate q whose arc length is q + eps sin q."""
    if not abs(eps) < 1:
        raise ValueError("circle deformation needs |eps| < 1")
    (q,) = _syms("q,")
    return chart_from_sympy(
        (q,),
        sp.Matrix([[(1 + sp.nsimplify(eps) * sp.cos(q)) ** 2]]),
        (Axis(0.0, TWO_PI, True),),
        f"circle-deformed:{eps:g}",
    )


@lru_cache(maxsize=64)
def get_chart(chart_id: str) -> MetricChart:
    """Resolve a catalog id (or ``file:PATH``) to a chart."""
    kind, _, rest = chart_id.partition(":")
    try:
        if kind == "cartesian":
            return cartesian(int(rest))
        if kind == "polar2" and not rest:
            return polar2()
        if kind == "sphere2":
            return sphere2(float(rest) if rest else 1.0)
        if kind == "sphere3":
            return sphere3(float(rest) if rest else 1.0)
        if kind == "circle-deformed":
            return circle_deformed(float(rest))
        if kind == "plane-deformed":
            eps, _, field_id = rest.partition(":")
            return deformed_chart(deformation_field(field_id or "sin-x", float(eps), 2))
        if kind == "file":
            return load_chart_file(rest)
    except ValueError as exc:
        raise ValueError(f"bad chart id {chart_id!r}: {exc}") from None
    raise ValueError(f"unknown chart id {chart_id!r}")


def load_chart_file(path: str) -> MetricChart:
    symbols, matrix, domain = read_metric_file(path)
    axes = tuple(
        Axis(*domain[i]) if i in domain else Axis() for i in range(len(symbols))
    )
    return chart_from_sympy(symbols, matrix, axes, f"file:{path}")
