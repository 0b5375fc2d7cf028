"""Finite-difference Hamiltonians on compact charts and their spectra.

The kinetic term is assembled in variational (flux) form,

    K = sum_a D_a^T diag(c^aa_face V) D_a + sum_{a != b} C_a^T diag(c^ab V) C_b,
    c^ab = omega^(1/2) omega^ab,

with ``D_a`` face differences, ``C_a`` centred node differences and ``V`` the
cell volume, so that ``psi^T K psi`` approximates the Dirichlet integral and
``H = (hbar^2/2m) W^{-1} K + diag(V_qmp + V_ext)`` with node weights
``W = omega^(1/2) V``. The matrix handed to the eigensolver is
``W^{1/2} H W^{-1/2}``, which is symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sps

from .errors import AsymmetryExceeded, GeometryError, GuardViolation, NotNormalized, SolverFailure
from .geometry import Constants, MetricChart, metric_jet
from .grids import GridSpec
from .quantization import ScalarField, Variant, variant_potential

ASYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class DiscretizedHamiltonian:
    matrix: np.ndarray  # W^{1/2} H W^{-1/2}, symmetric
    weights: np.ndarray  # omega^(1/2) * cell volume per node
    variant: Variant
    chart_id: str
    grid: GridSpec
    nodes: np.ndarray = field(repr=False)
    stiffness: sps.csr_matrix = field(repr=False)  # (hbar^2/2m) K
    potential: np.ndarray = field(repr=False)  # diagonal potential per node
    asymmetry: float = 0.0

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None  # columns are nodal wave functions, W-normalised
    variant: str
    chart_id: str
    counts: tuple


def _face_ops_1d(N: int, h: float, periodic: bool, boundary: str):
    """Face difference, face averaging and face weight factors along one axis."""
    if periodic:
        i = np.arange(N)
        D = sps.csr_matrix((np.r_[-np.ones(N), np.ones(N)] / h, (np.r_[i, i], np.r_[i, (i + 1) % N])), (N, N))
        A = sps.csr_matrix((np.full(2 * N, 0.5), (np.r_[i, i], np.r_[i, (i + 1) % N])), (N, N))
        return D, A, np.ones(N)
    i = np.arange(N - 1)
    D = sps.csr_matrix((np.r_[-np.ones(N - 1), np.ones(N - 1)] / h, (np.r_[i, i], np.r_[i, i + 1])), (N - 1, N))
    A = sps.csr_matrix((np.full(2 * (N - 1), 0.5), (np.r_[i, i], np.r_[i, i + 1])), (N - 1, N))
    frac = np.ones(N - 1)
    if boundary == "dirichlet":
        # the wave function vanishes on the outer faces, half a cell from the end nodes
        Db = sps.csr_matrix(([2.0 / h, -2.0 / h], ([0, 1], [0, N - 1])), (2, N))
        Ab = sps.csr_matrix(([1.0, 1.0], ([0, 1], [0, N - 1])), (2, N))
        D = sps.vstack([Db[0], D, Db[1]]).tocsr()
        A = sps.vstack([Ab[0], A, Ab[1]]).tocsr()
        frac = np.r_[0.5, frac, 0.5]
    return D, A, frac


def _center_diff_1d(N: int, h: float, periodic: bool, boundary: str):
    rows, cols, vals = [], [], []
    for i in range(N):
        for off, sgn in ((1, 1.0), (-1, -1.0)):
            j = i + off
            if periodic:
                j %= N
            elif j < 0 or j >= N:
                # ghost node mirrored (zero flux) or reflected with sign flip (zero value)
                j = i
                sgn = sgn if boundary == "neumann" else -sgn
            rows.append(i)
            cols.append(j)
            vals.append(sgn / (2 * h))
    return sps.csr_matrix((vals, (rows, cols)), (N, N))


def _expand(op, axis: int, counts) -> sps.csr_matrix:
    mats = [sps.identity(c, format="csr") for c in counts]
    mats[axis] = op
    out = mats[0]
    for m in mats[1:]:
        out = sps.kron(out, m, format="csr")
    return out


def assemble_stiffness(chart: MetricChart, grid: GridSpec):
    """Sparse stiffness ``K``, node weights and node coordinates."""
    axes = grid.axes(chart)
    counts = tuple(len(a[0]) for a in axes)
    pts, vol = grid.nodes(chart)
    try:
        g = metric_jet(chart, pts, 0).value
    except GeometryError as exc:
        raise GuardViolation(f"grid node at a chart singularity: {exc}") from None
    sq = np.sqrt(np.linalg.det(g))
    coef = sq[:, None, None] * np.linalg.inv(g)  # omega^(1/2) omega^ab at nodes
    n = chart.dim
    K = sps.csr_matrix((len(pts), len(pts)))
    for a, (nodes, h, periodic) in enumerate(axes):
        D1, A1, frac = _face_ops_1d(len(nodes), h, periodic, grid.boundary)
        D = _expand(D1, a, counts)
        A = _expand(A1, a, counts)
        # face weight fractions broadcast over the other axes
        shape = list(counts)
        shape[a] = len(frac)
        fr = np.broadcast_to(frac.reshape([-1 if k == a else 1 for k in range(n)]), shape).ravel()
        cf = A @ coef[:, a, a]
        K = K + D.T @ sps.diags(cf * fr * vol) @ D
    offdiag = [(a, b) for a in range(n) for b in range(n) if a != b]
    if offdiag and np.max(np.abs(coef[:, [p[0] for p in offdiag], [p[1] for p in offdiag]])) > 0:
        C = [_expand(_center_diff_1d(len(ax[0]), ax[1], ax[2], grid.boundary), k, counts) for k, ax in enumerate(axes)]
        for a, b in offdiag:
            K = K + C[a].T @ sps.diags(coef[:, a, b] * vol) @ C[b]
    return K.tocsr(), sq * vol, pts


def discretize(
    chart: MetricChart,
    consts: Constants,
    variant,
    v_ext: ScalarField | None,
    grid: GridSpec,
) -> DiscretizedHamiltonian:
    """Measure-symmetrised matrix of the SCH, DW or NU(nu) Hamiltonian on ``grid``."""
    variant = Variant.parse(variant)
    K, W, pts = assemble_stiffness(chart, grid)
    stiff = consts.kinetic * K
    pot = np.asarray(variant_potential(chart, consts, variant, pts), dtype=float)
    if v_ext is not None:
        pot = pot + np.real(v_ext.evaluator(pts))
    H = stiff.toarray() / W[:, None] + np.diag(pot)
    sw = np.sqrt(W)
    S = sw[:, None] * H / sw[None, :]
    asym = float(np.max(np.abs(S - S.T)))
    scale = max(1.0, float(np.max(np.abs(S))))
    if asym > ASYMMETRY_TOL * scale:
        raise AsymmetryExceeded(f"symmetrised matrix asymmetry {asym:.3g}")
    S = 0.5 * (S + S.T)
    return DiscretizedHamiltonian(S, W, variant, chart.name, grid, pts, stiff, pot, asym)


def eigenvalues(h: DiscretizedHamiltonian | np.ndarray, k: int, vectors: bool = False) -> Spectrum:
    """The ``k`` lowest eigenvalues (ascending) of a discretised Hamiltonian."""
    M = h.matrix if isinstance(h, DiscretizedHamiltonian) else np.asarray(h, dtype=float)
    N = M.shape[0]
    if not 1 <= k <= N:
        raise ValueError(f"k must lie in [1, {N}]")
    try:
        if vectors:
            vals, vecs = scipy.linalg.eigh(M, subset_by_index=[0, k - 1], driver="evr")
        else:
            vals = scipy.linalg.eigh(M, eigvals_only=True, subset_by_index=[0, k - 1], driver="evr")
            vecs = None
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverFailure(str(exc)) from None
    if not np.all(np.isfinite(vals)):
        raise SolverFailure("non-finite eigenvalues")
    if vecs is not None and isinstance(h, DiscretizedHamiltonian):
        vecs = vecs / np.sqrt(h.weights)[:, None]
    if isinstance(h, DiscretizedHamiltonian):
        return Spectrum(vals, vecs, str(h.variant), h.chart_id, h.grid.counts)
    return Spectrum(vals, vecs, "", "", (N,))


def half_grid(grid: GridSpec) -> GridSpec:
    return GridSpec(tuple(c // 2 for c in grid.counts), grid.periodic, grid.guard, grid.bounds, grid.boundary)


def discretization_error(chart, consts, variant, v_ext, grid, k) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues on ``grid`` and the estimate ``|lambda(N) - lambda(N/2)|``."""
    fine = eigenvalues(discretize(chart, consts, variant, v_ext, grid), k).eigenvalues
    coarse = eigenvalues(discretize(chart, consts, variant, v_ext, half_grid(grid)), k).eigenvalues
    return fine, np.abs(fine - coarse)


@dataclass(frozen=True)
class AnomalyReport:
    gaps: np.ndarray
    eigenvalues_a: np.ndarray
    eigenvalues_b: np.ndarray
    error_a: np.ndarray
    error_b: np.ndarray

    @property
    def error_estimate(self) -> np.ndarray:
        return np.maximum(self.error_a, self.error_b)


def anomaly_gap(
    chart_a: MetricChart,
    chart_b: MetricChart,
    consts: Constants,
    variant,
    grid: GridSpec,
    k: int,
    v_ext: ScalarField | None = None,
) -> AnomalyReport:
    """Per-level spectral differences between two charts of one manifold."""
    la, ea = discretization_error(chart_a, consts, variant, v_ext, grid, k)
    if chart_b is chart_a:
        lb, eb = la, ea
    else:
        lb, eb = discretization_error(chart_b, consts, variant, v_ext, grid, k)
    return AnomalyReport(np.abs(la - lb), la, lb, ea, eb)


def dirichlet_form(chart, consts, variant, v_ext, psi: np.ndarray, grid: GridSpec, norm_tol: float = 1e-6) -> float:
    """Discrete energy ``psi^* (hbar^2/2m) K psi + sum W V |psi|^2`` of nodal values."""
    variant = Variant.parse(variant)
    K, W, pts = assemble_stiffness(chart, grid)
    psi = np.asarray(psi).ravel()
    if psi.shape != W.shape:
        raise ValueError("psi must hold one value per grid node")
    norm = float(np.sum(W * np.abs(psi) ** 2))
    if abs(norm - 1.0) > norm_tol:
        raise NotNormalized(f"norm of psi is {norm:.12g}, expected 1")
    pot = np.asarray(variant_potential(chart, consts, variant, pts), dtype=float)
    if v_ext is not None:
        pot = pot + np.real(v_ext.evaluator(pts))
    kin = consts.kinetic * np.real(np.vdot(psi, K @ psi))
    return float(kin + np.sum(W * pot * np.abs(psi) ** 2))
