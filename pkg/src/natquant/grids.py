"""Uniform tensor-product grids on a chart.

Periodic axes carry nodes ``lo + i h`` (trapezoid rule, spectrally accurate
for smooth periodic integrands). Non-periodic axes are cell-centred inside
``[lo + guard, hi - guard]`` (midpoint rule), so no node ever sits on a
coordinate singularity at the edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import GeometryError, GuardViolation
from .geometry import MetricChart, metric_jet

MIN_NODES = 16


@dataclass(frozen=True)
class GridSpec:
    counts: tuple[int, ...]
    periodic: tuple[bool, ...] | None = None
    guard: float | tuple[float, ...] = 0.0
    bounds: tuple | None = None
    boundary: str = "neumann"

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if any(c < MIN_NODES for c in self.counts):
            raise ValueError(f"every axis needs at least {MIN_NODES} nodes")
        if self.boundary not in ("neumann", "dirichlet"):
            raise ValueError("boundary must be 'neumann' or 'dirichlet'")

    def _guard(self, a: int) -> float:
        g = self.guard if np.isscalar(self.guard) else self.guard[a]
        if g < 0:
            raise GuardViolation("guard margins must be non-negative")
        return float(g)

    def axes(self, chart: MetricChart) -> list[tuple[np.ndarray, float, bool]]:
        """Per axis: node coordinates, spacing and periodic flag."""
        if len(self.counts) != chart.dim:
            raise ValueError(f"grid has {len(self.counts)} axes, chart {chart.name} has {chart.dim}")
        out = []
        for a, (ax, N) in enumerate(zip(chart.axes, self.counts)):
            periodic = ax.periodic if self.periodic is None else bool(self.periodic[a])
            if periodic != ax.periodic:
                raise ValueError(f"periodic flag of axis {a} does not match chart {chart.name}")
            lo, hi = ax.lo, ax.hi
            if self.bounds is not None and self.bounds[a] is not None:
                lo, hi = self.bounds[a]
            if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
                raise GuardViolation(f"axis {a} of {chart.name} needs finite grid bounds")
            if periodic:
                h = (hi - lo) / N
                nodes = lo + h * np.arange(N)
            else:
                g = self._guard(a)
                lo, hi = lo + g, hi - g
                if hi <= lo:
                    raise GuardViolation(f"guard margins swallow axis {a}")
                h = (hi - lo) / N
                nodes = lo + h * (np.arange(N) + 0.5)
            out.append((nodes, h, periodic))
        return out

    def nodes(self, chart: MetricChart) -> tuple[np.ndarray, float]:
        """All nodes as an (N_total, n) array in C order, and the cell volume."""
        axes = self.axes(chart)
        mesh = np.meshgrid(*[a[0] for a in axes], indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        return pts, float(np.prod([a[1] for a in axes]))

    def measure(self, chart: MetricChart) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and quadrature weights ``omega^(1/2) * cell volume``."""
        pts, vol = self.nodes(chart)
        try:
            g = metric_jet(chart, pts, 0).value
        except GeometryError as exc:
            raise GuardViolation(f"grid node at a chart singularity: {exc}") from None
        return pts, np.sqrt(np.linalg.det(g)) * vol


def uniform_grid(chart: MetricChart, counts: int | Sequence[int], **kw) -> GridSpec:
    if np.isscalar(counts):
        counts = (int(counts),) * chart.dim
    return GridSpec(tuple(counts), **kw)
