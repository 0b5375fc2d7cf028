"""Quantum mechanics of natural systems on curved charts.

Metric geometry, DeWitt and ordering-family quantum mechanical potentials,
normal coordinates, flat-space deformations, finite-difference spectra and
quasi-classical two-point quantities.
"""

from .charts import get_chart
from .deformation import convergence_study, deformation_field, deformed_chart, qmp_deformation_first_order
from .errors import NatquantError
from .geometry import Constants, MetricChart, geometry_jet, metric_jet
from .grids import GridSpec, uniform_grid
from .normal_coords import build_normal_chart, metric_expansion_fit, qmp_normal_asymptote, shoot
from .quantization import (
    ScalarField,
    Variant,
    apply_hamiltonian,
    apply_momentum,
    conformal_coefficient,
    energy_functional,
    qmp_dewitt,
    qmp_nu,
)
from .quasiclassical import classical_action, coincidence_limit, van_vleck, v_tilde
from .spectral import anomaly_gap, discretize, eigenvalues

__version__ = "0.1.0"

__all__ = [
    "Constants",
    "GridSpec",
    "MetricChart",
    "NatquantError",
    "ScalarField",
    "Variant",
    "anomaly_gap",
    "apply_hamiltonian",
    "apply_momentum",
    "build_normal_chart",
    "classical_action",
    "coincidence_limit",
    "conformal_coefficient",
    "convergence_study",
    "deformation_field",
    "deformed_chart",
    "discretize",
    "eigenvalues",
    "energy_functional",
    "geometry_jet",
    "get_chart",
    "metric_expansion_fit",
    "metric_jet",
    "qmp_deformation_first_order",
    "qmp_dewitt",
    "qmp_normal_asymptote",
    "qmp_nu",
    "shoot",
    "uniform_grid",
    "v_tilde",
    "van_vleck",
]
