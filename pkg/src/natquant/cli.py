"""Command-line front end.

Every run writes one data file (CSV with a header row, or JSON as an array of
row objects) and a manifest ``<out>.manifest.json`` echoing the resolved
inputs, the package version, timings and a short result summary.

Examples::

    natquant qmp --chart polar2 --at 1.0,0.0 --out qmp.csv
    natquant conformal --n 3
    natquant spectrum --chart circle-deformed:0 --variant SCH --N 256 --k 5 --mass 0.5
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .charts import get_chart
from .deformation import convergence_study, deformation_field
from .errors import NatquantError
from .geometry import Constants, geometry_jet
from .grids import GridSpec
from .normal_coords import build_normal_chart, metric_expansion_fit, qmp_normal_asymptote
from .quantization import Variant, conformal_coefficient, qmp_dewitt, qmp_nu
from .quasiclassical import classical_action, ray_points, van_vleck, v_tilde
from .spectral import anomaly_gap, discretize, eigenvalues


def _points(text: str) -> np.ndarray:
    """``"1,0;2,0.5"`` -> array of points."""
    rows = [[float(v) for v in part.split(",")] for part in text.split(";") if part.strip()]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValueError(f"bad point list {text!r}")
    return np.array(rows)


def _floats(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _grid_points(chart, counts_text: str) -> np.ndarray:
    counts = _ints(counts_text)
    if len(counts) == 1:
        counts = counts * chart.dim
    return GridSpec(counts).nodes(chart)[0]


def _eval_points(chart, args) -> np.ndarray:
    if args.at:
        return _points(args.at)
    if args.grid:
        return _grid_points(chart, args.grid)
    raise ValueError("give --at or --grid")


def _coord_cols(n: int) -> list[str]:
    return [f"q{i + 1}" for i in range(n)]


def _consts(args) -> Constants:
    return Constants(float(args.hbar), float(args.mass))


def cmd_curvature(args):
    chart = get_chart(args.chart)
    pts = _eval_points(chart, args)
    jet = geometry_jet(chart, pts)
    cols = _coord_cols(chart.dim) + ["scalar_curvature", "det_metric"]
    rows = [list(p) + [R, d] for p, R, d in zip(pts, np.atleast_1d(jet.scalar_curvature), np.atleast_1d(jet.det))]
    return cols, rows, {}


def cmd_qmp(args):
    chart = get_chart(args.chart)
    consts = _consts(args)
    pts = _eval_points(chart, args)
    nus = _floats(args.nu) if args.nu else []
    v = qmp_dewitt(chart, consts, pts).v_dw
    extra = [qmp_nu(chart, consts, pts, nu) for nu in nus]
    cols = _coord_cols(chart.dim) + ["v_dw"] + [f"v_nu({nu:g})" for nu in nus]
    rows = [list(p) + [v[i]] + [e[i] for e in extra] for i, p in enumerate(pts)]
    return cols, rows, {}


def cmd_normal(args):
    chart = get_chart(args.chart)
    consts = _consts(args)
    q0 = _points(args.at)[0]
    radii = np.array(_floats(args.radii)) if args.radii else None
    asym = qmp_normal_asymptote(chart, consts, q0, radii=radii, resolution=args.resolution)
    nc = build_normal_chart(chart, q0, 2.0 * args.fit_radius, args.resolution)
    fit = metric_expansion_fit(nc, args.fit_radius)
    rows = [[r, v] for r, v in zip(asym.radii, asym.samples)] + [[0.0, asym.value]]
    summary = {
        "extrapolated": asym.value,
        "expected_magnitude": asym.expected_magnitude,
        "sign": asym.sign,
        "scalar_curvature": asym.scalar_curvature,
        "fit_radius": args.fit_radius,
        "fit_max_error": fit.max_error,
        "fit_relative_error": fit.relative_error,
    }
    return ["radius", "qmp"], rows, summary


def cmd_deform(args):
    consts = _consts(args)
    eps = _floats(args.eps)
    field = deformation_field(args.field, eps[0], 2)
    pts = _points(args.at) if args.at else np.array([[0.3, 0.2], [1.0, -0.5], [2.0, 0.7]])
    study = convergence_study(field, consts, pts, eps)
    ratios = [math.nan] + list(study.ratios)
    rows = [[e, g, r] for e, g, r in zip(study.epsilons, study.gaps, ratios)]
    return ["epsilon", "gap", "ratio"], rows, {"field": args.field}


def _grid_spec(chart, args) -> GridSpec:
    counts = _ints(args.N)
    if len(counts) == 1:
        counts = counts * chart.dim
    return GridSpec(counts, guard=float(args.guard), boundary=args.boundary)


def cmd_spectrum(args):
    chart = get_chart(args.chart)
    grid = _grid_spec(chart, args)
    h = discretize(chart, _consts(args), args.variant, None, grid)
    spec = eigenvalues(h, args.k)
    N = "x".join(str(c) for c in grid.counts)
    rows = [[i, lam, str(h.variant), chart.name, N] for i, lam in enumerate(spec.eigenvalues)]
    return ["index", "eigenvalue", "variant", "chart", "N"], rows, {"asymmetry": h.asymmetry}


def cmd_anomaly(args):
    a, b = get_chart(args.chart), get_chart(args.chart_b)
    grid = _grid_spec(a, args)
    rep = anomaly_gap(a, b, _consts(args), args.variant, grid, args.k)
    rows = [
        [i, la, lb, g, e]
        for i, (la, lb, g, e) in enumerate(zip(rep.eigenvalues_a, rep.eigenvalues_b, rep.gaps, rep.error_estimate))
    ]
    summary = {"max_gap_over_error": float(np.max(rep.gaps / np.maximum(rep.error_estimate, 1e-300)))}
    return ["index", "lambda_a", "lambda_b", "gap", "error_estimate"], rows, summary


def cmd_propagator(args):
    chart = get_chart(args.chart)
    consts = _consts(args)
    q0 = _points(args.at)[0]
    seps = np.array(_floats(args.separations))
    direction = np.array(_floats(args.direction)) if args.direction else None
    pts = ray_points(chart, q0, seps, direction)
    dt = float(args.dt)
    S = classical_action(chart, consts, pts, q0, dt)
    D = van_vleck(chart, consts, pts, q0, dt)
    V = v_tilde(chart, consts, pts, q0, dt)
    rows = [[s, dt, a, d, v] for s, a, d, v in zip(seps, S, D, V)]
    return ["s", "dt", "S", "D", "V_tilde"], rows, {}


def cmd_conformal(args):
    ns = _ints(args.n) if args.n else tuple(range(1, 9))
    rows = []
    for n in ns:
        c = conformal_coefficient(n)
        rows.append([n, str(c.coefficient), float(c.coefficient), str(c.reference), c.equal])
    return ["n", "coefficient", "coefficient_value", "reference", "equal"], rows, {}


COMMANDS = {
    "curvature": cmd_curvature,
    "qmp": cmd_qmp,
    "normal": cmd_normal,
    "deform": cmd_deform,
    "spectrum": cmd_spectrum,
    "anomaly": cmd_anomaly,
    "propagator": cmd_propagator,
    "conformal": cmd_conformal,
}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _json_value(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, Fraction):
        return str(v)
    return v


def render(cols, rows, fmt: str) -> str:
    if fmt == "json":
        objs = [{c: _json_value(v) for c, v in zip(cols, r)} for r in rows]
        return json.dumps(objs, indent=1) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--chart", default="cartesian:2", help="chart id or file:PATH")
    common.add_argument("--hbar", type=float, default=1.0)
    common.add_argument("--mass", type=float, default=1.0)
    common.add_argument("--out", default=None, help="output file (default <command>.<format>)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--config", default=None, help="JSON file of option defaults; flags override it")

    parser = argparse.ArgumentParser(prog="natquant", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"natquant {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    def add(name, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        subs[name] = p
        return p

    p = add("curvature", "scalar curvature over points or a grid")
    p.add_argument("--at", help="points 'q1,q2;q1,q2'")
    p.add_argument("--grid", help="grid node counts, e.g. 32 or 32,64")

    p = add("qmp", "DeWitt and ordering-family QMP over points or a grid")
    p.add_argument("--at")
    p.add_argument("--grid")
    p.add_argument("--nu", help="comma-separated ordering parameters")

    p = add("normal", "QMP asymptote in normal coordinates and metric expansion fit")
    p.add_argument("--at", required=True, help="origin point")
    p.add_argument("--radii", help="comma-separated sample radii")
    p.add_argument("--fit-radius", type=float, default=0.05)
    p.add_argument("--resolution", type=int, default=1000)

    p = add("deform", "first-order deformation QMP convergence study")
    p.add_argument("--field", default="sin-x")
    p.add_argument("--eps", default="0.01,0.005,0.0025")
    p.add_argument("--at", help="evaluation points")

    for name, text in (("spectrum", "lowest eigenvalues"), ("anomaly", "per-level spectral gaps between two charts")):
        p = add(name, text)
        p.add_argument("--variant", default="SCH", help="SCH, DW or NU(nu)")
        p.add_argument("--N", default="256", help="nodes per axis")
        p.add_argument("--k", type=int, default=5)
        p.add_argument("--boundary", choices=("neumann", "dirichlet"), default="neumann")
        p.add_argument("--guard", type=float, default=0.0)
    subs["anomaly"].add_argument("--chart-b", required=True)

    p = add("propagator", "action, Van Vleck determinant and two-point QMP along a ray")
    p.add_argument("--at", required=True, help="base point q'")
    p.add_argument("--separations", default="0.1,0.05,0.025")
    p.add_argument("--direction")
    p.add_argument("--dt", type=float, default=1.0)

    p = add("conformal", "conformal coupling coefficient against 1/6")
    p.add_argument("--n", help="dimensions, comma-separated (default 1..8)")
    return parser, subs


def parse_args(argv):
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(cfg, dict):
            raise ValueError("config file must hold a JSON object")
        subs[args.command].set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
        args = parser.parse_args(argv)
    return args


def _check_positive(args):
    for name in ("hbar", "mass", "dt", "k", "fit_radius", "resolution"):
        v = getattr(args, name, None)
        if v is not None and not float(v) > 0:
            raise ValueError(f"--{name.replace('_', '-')} must be positive")
    if getattr(args, "variant", None):
        Variant.parse(args.variant)


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        _check_positive(args)
        t0 = time.perf_counter()
        cols, rows, summary = COMMANDS[args.command](args)
        elapsed = time.perf_counter() - t0
        out = Path(args.out or f"{args.command}.{args.format}")
        out.write_text(render(cols, rows, args.format), encoding="utf-8")
        inputs = {k: v for k, v in vars(args).items() if k not in ("out",)}
        manifest = {
            "tool": "natquant",
            "version": __version__,
            "argv": argv,
            "inputs": inputs,
            "output": str(out),
            "rows": len(rows),
            "results": {k: _json_value(v) for k, v in summary.items()},
            "timings": {"compute_seconds": elapsed},
        }
        Path(str(out) + ".manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    except (NatquantError, ValueError, OSError, json.JSONDecodeError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else ""
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
