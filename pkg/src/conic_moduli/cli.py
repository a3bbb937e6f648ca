"""The ``conic-moduli`` command line front end.

Every subcommand emits deterministic artifacts: identical invocations give
byte-identical output.  All numeric payloads carry the package version and
the seed in use.  Exit codes: 2 for malformed configuration, 1 for numeric
failures (divergence, degeneracy), 0 otherwise -- verification failures are
reported in the payload, not via the exit status.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import charts, cones, flat, lattice, phg, solver
from .extrapolate import least_squares_slope, loglog_slopes

DEFAULT_SEED = 20240
ENV_SEED = "CONIC_MODULI_SEED"


def _seed(args: argparse.Namespace) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    return int(os.environ.get(ENV_SEED, DEFAULT_SEED))


def _out(args: argparse.Namespace):
    if getattr(args, "out", None):
        return open(args.out, "w", encoding="utf-8")
    return sys.stdout


def _emit_json(payload: dict, args: argparse.Namespace, seed: Optional[int] = None) -> None:
    payload = dict(payload)
    payload["version"] = __version__
    if seed is not None:
        payload["seed"] = seed
    f = _out(args)
    json.dump(payload, f, sort_keys=True, default=str)
    f.write("\n")
    if f is not sys.stdout:
        f.close()


def _emit_csv(header: Sequence[str], rows: Sequence[Sequence], args: argparse.Namespace, seed: Optional[int] = None) -> None:
    f = _out(args)
    stamp = f"# conic-moduli {__version__}"
    if seed is not None:
        stamp += f" seed={seed}"
    f.write(stamp + "\n")
    f.write(",".join(header) + "\n")
    for row in rows:
        f.write(",".join(str(x) for x in row) + "\n")
    if f is not sys.stdout:
        f.close()


def _parse_rational(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a rational: {text!r}") from exc


def _parse_beta_list(text: str) -> list[Fraction]:
    parts = [p for p in text.split(",") if p]
    if not parts:
        raise ValueError("empty angle list")
    return [_parse_rational(p) for p in parts]


def _parse_points(text: str) -> list[complex]:
    pts = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        x, y = chunk.split(",")
        pts.append(complex(float(x), float(y)))
    return pts


def _parse_mesh(text: str) -> tuple[int, int]:
    t, p = text.lower().split("x")
    return int(t), int(p)


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_faces(args: argparse.Namespace) -> int:
    trees = lattice.enumerate_fmax_strata(args.k, augmented=args.augmented)
    rows = [(t.encode(), t.codimension, t.height, int(t.is_interior)) for t in trees]
    if args.format == "csv":
        _emit_csv(("encoding", "codimension", "height", "interior"), rows, args)
    else:
        _emit_json(
            {
                "k": args.k,
                "augmented": args.augmented,
                "count": len(rows),
                "strata": [
                    {"encoding": e, "codimension": c, "height": h, "interior": bool(i)}
                    for e, c, h, i in rows
                ],
            },
            args,
        )
    return 0


def _cmd_charts_verify(args: argparse.Namespace) -> int:
    seed = _seed(args)
    report = charts.pullback_report(args.chart, samples=args.samples, region=args.region, seed=seed)
    payload = {
        "chart": report.chart,
        "lifting": {
            "rows": list(report.lifting.rows),
            "cols": list(report.lifting.cols),
            "entries": [list(r) for r in report.lifting.entries],
            "row_condition_ok": report.lifting.row_condition_ok(),
        },
        "factors": {k: list(v) for k, v in report.factors.items()},
        "amin": report.amin,
        "amax": report.amax,
        "roundtrip_max_err": report.roundtrip_max_err,
        "samples": report.samples,
        "region": report.region,
        "positivity_ok": report.positivity_ok,
        "failure": report.failure,
    }
    _emit_json(payload, args, seed)
    return 0


def _cmd_cones_classify(args: argparse.Namespace) -> int:
    betas = _parse_beta_list(args.beta)
    data = cones.ConeData.of(args.genus, betas, args.curvature)
    verdicts = cones.classify_merges(data)
    payload = {
        "genus": args.genus,
        "curvature": args.curvature,
        "beta": [str(b) for b in data.beta],
        "approximated": data.approximated,
        "verdicts": [
            {
                "subset": str(v.subset),
                "merged_angle": str(v.merged_angle),
                "status": v.status.value,
                "at_equality": v.at_equality,
                **(
                    {"partner": str(v.partner), "partner_angle": str(v.partner_angle)}
                    if v.partner is not None
                    else {}
                ),
            }
            for v in verdicts
        ],
    }
    _emit_json(payload, args)
    return 0


def _cmd_flat_expand(args: argparse.Namespace) -> int:
    b1 = _parse_rational(args.beta1)
    b2 = _parse_rational(args.beta2)
    exp2 = flat.corner_expansion_2pt(b1, b2, args.order)
    rows = []
    for n, poly in exp2.terms:
        for m in sorted(poly.coeffs):
            c, d = poly.coeffs[m]
            rows.append((n, m, str(c.value()), str(d.value())))
        if poly.is_zero:
            rows.append((n, n, "0", "0"))
    _emit_csv(("power", "degree", "cos", "sin"), rows, args)
    return 0


def _cmd_flat_probe(args: argparse.Namespace) -> int:
    betas = _parse_beta_list(args.beta)
    if args.points:
        pts = _parse_points(args.points)
    else:
        k = len(betas)
        pts = [complex(math.cos(2 * math.pi * j / k), math.sin(2 * math.pi * j / k)) for j in range(k)]
    total = sum((b - 1 for b in betas), Fraction(0))
    background = "plane" if total == -2 else "local"
    metric = flat.FlatConicMetric.of(pts, betas, background=background)
    radii = [float(r) for r in args.radii.split(",")]
    report = flat.cone_angle_probe(metric, args.index, radii)
    rows = [(r, ratio) for r, ratio in zip(report.radii, report.ratios)]
    rows.append(("extrapolated", report.extrapolated))
    _emit_csv(("r", "ratio"), rows, args)
    return 0


def _cmd_phg_index(args: argparse.Namespace) -> int:
    entries = phg.index_set(_parse_rational(args.beta), _parse_rational(args.cutoff))
    rows = []
    for e in entries:
        for (j, k) in e.pairs:
            rows.append((str(e.alpha), j, k, e.multiplicity))
    _emit_csv(("alpha", "j", "k", "multiplicity"), rows, args)
    return 0


def _cmd_phg_u0(args: argparse.Namespace) -> int:
    coeffs = phg.u0_series(args.order)
    rows = [(j + 1, str(c)) for j, c in enumerate(coeffs)]
    _emit_csv(("j", "a_j"), rows, args)
    return 0


def _cmd_phg_recurse(args: argparse.Namespace) -> int:
    beta = _parse_rational(args.beta)
    series = phg.PhgSeries(beta, _parse_rational(args.truncation))
    assignments = {}
    for item in args.assign or []:
        key, _, val = item.partition("=")
        if not val:
            raise ValueError(f"malformed assignment {item!r}")
        assignments[key] = Fraction(val)
    rows = []
    for j in range(1, args.steps + 1):
        table = phg.recursion_step(j, series)
        series.set_step(j, table)
        # free coefficients are fixed by the global problem, not locally;
        # unassigned ones default to zero so later steps can form products
        defaults = {s: Fraction(0) for alpha in table for s in table[alpha].free_symbols}
        defaults.update({k: v for k, v in assignments.items() if k in defaults})
        series.assign(defaults)
        for alpha in sorted(table):
            slot = table[alpha]
            resolved = slot.trig.substitute(series.assignments)
            degrees = sorted(set(resolved.coeffs) | ({int(alpha)} if slot.is_free_slot else set()))
            for m in degrees:
                c, d = resolved.coeffs.get(m, (phg.LinExpr(), phg.LinExpr()))
                rows.append(
                    (
                        j,
                        str(alpha),
                        ";".join(f"{l}+{k}" for l, k in slot.labels),
                        slot.multiplicity,
                        int(slot.is_free_slot),
                        m,
                        str(c),
                        str(d),
                    )
                )
    _emit_csv(("j", "alpha", "labels", "multiplicity", "free", "degree", "cos", "sin"), rows, args)
    return 0


def _cmd_solve_hyperbolic(args: argparse.Namespace) -> int:
    beta = float(_parse_rational(args.beta))
    nt, nphi = _parse_mesh(args.mesh)
    mesh = solver.FiberMesh(args.rmin, args.rmax, nt, nphi, inner="pole", outer="dirichlet")
    r, _ = mesh.grids()
    rfrak = r**beta / beta
    if np.max(rfrak) >= 2.0:
        raise ValueError("mesh reaches the closing radius of the hyperbolic cone")
    coeffs = phg.u0_series(args.series_order)
    u_trunc = sum(float(c) * rfrak ** (2 * (j + 1)) for j, c in enumerate(coeffs)) * np.ones(
        (mesh.nt, mesh.nphi)
    )
    log_density = 2.0 * (beta - 1.0) * np.log(r) * np.ones((mesh.nt, mesh.nphi))
    op = solver.assemble(mesh, np.exp(log_density + 2 * u_trunc))
    phi_grid = 0.5 * log_density + u_trunc
    fix = op.fixed_values({"outer": phi_grid[-1, :]}) if op.nfixed else None
    K_tilde = op.weak_laplacian_dof(op.grid_to_dof(phi_grid), fix)
    # the discrete curvature at the collapsed tip includes the cone's
    # distributional curvature; that delta belongs to the background, so
    # remove the exact flux of the conic part from the pole row
    cone_part = (beta - 1.0) * np.log(r) * np.ones((mesh.nt, mesh.nphi))
    delta_dof = op.weak_laplacian_dof(op.grid_to_dof(cone_part))
    K_tilde[op.inner_pole_dof] -= delta_dof[op.inner_pole_dof]
    f_grid = op.dof_to_grid(-(K_tilde + 1.0))
    report = solver.picard_solve(op, f_grid, tol=args.tol)
    payload = {
        "equation": "hyperbolic correction (Delta+2)v = f + Q(v)",
        "beta": args.beta,
        "series_order": args.series_order,
        "mesh": args.mesh,
        "r_range": [args.rmin, args.rmax],
        "iterations": report.iterations,
        "residual_sup": report.residual_sup,
        "contraction": report.contraction,
        "sup_correction": report.sup_solution,
        "sup_rhs": report.sup_rhs,
        "max_principle_bound_ok": report.bound_ok,
    }
    _emit_json(payload, args, _seed(args))
    if args.field_out:
        rows = [
            (float(mesh.r[i]), float(mesh.phi[j]), repr(float(report.solution[i, j])))
            for i in range(mesh.nt)
            for j in range(mesh.nphi)
        ]
        ns = argparse.Namespace(out=args.field_out)
        _emit_csv(("r", "phi", "v"), rows, ns, _seed(args))
    return 0


def _cmd_solve_spherical(args: argparse.Namespace) -> int:
    betas = [float(b) for b in _parse_beta_list(args.beta)]
    pts = _parse_points(args.points) if args.points else _default_sphere_points(len(betas))
    nt, nphi = _parse_mesh(args.mesh)
    extent = -math.log(args.rmin) if args.rmin is not None else args.extent
    mesh = solver.FiberMesh(
        math.exp(-extent), math.exp(extent), nt, nphi, inner="pole", outer="pole"
    )
    report = solver.spherical_cone_solve(
        betas, pts, mesh, guard=not args.no_guard, margin=args.margin, tol=args.tol
    )
    payload = {
        "equation": "spherical Delta u + K0 - e^{2u} = 0",
        "beta": args.beta,
        "mesh": args.mesh,
        "extent": args.extent,
        "iterations": report.iterations,
        "residual_sup": report.residual_sup,
        "sup_solution": report.sup_solution,
        "spectral_gap": report.gap,
    }
    _emit_json(payload, args, _seed(args))
    return 0


def _default_sphere_points(k: int) -> list[complex]:
    """Cones at 0, roots of unity, and infinity (the last angle)."""
    if k < 2:
        raise ValueError("need at least two cone angles")
    inner = k - 2
    pts = [0j]
    for j in range(inner):
        pts.append(complex(math.cos(2 * math.pi * j / max(inner, 1)), math.sin(2 * math.pi * j / max(inner, 1))))
    return pts


def _cmd_fit(args: argparse.Namespace) -> int:
    rows = []
    with open(args.input, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#") or line[0].isalpha():
                continue
            parts = line.split(",")
            rows.append((float(parts[0]), float(parts[1])))
    if len(rows) < 3:
        raise ValueError("need at least three (rho, value) rows")
    rhos = [r for r, _ in rows]
    vals = [abs(v) for _, v in rows]
    slope = least_squares_slope(rhos, vals)
    payload = {
        "input": os.path.basename(args.input),
        "n_target": args.N,
        "slope": slope,
        "pair_slopes": loglog_slopes(rhos, vals),
        "passes": slope >= args.N - 0.1,
    }
    if args.terms:
        fit = phg.fit_exponents(rows, count=args.terms)
        payload["fit_ok"] = fit.ok
        payload["fit_terms"] = [{"alpha": t.alpha, "coefficient": t.coefficient} for t in fit.terms]
        payload["fit_message"] = fit.message
    _emit_json(payload, args)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="conic-moduli", description=__doc__)
    p.add_argument("--out", help="write output to this path instead of stdout")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("faces", help="enumerate boundary strata of the deepest face")
    f.add_argument("--k", type=int, required=True)
    f.add_argument("--augmented", action="store_true")
    f.add_argument("--format", choices=("json", "csv"), default="json")
    f.set_defaults(func=_cmd_faces)

    c = sub.add_parser("charts", help="chart verification")
    csub = c.add_subparsers(dest="subcommand", required=True)
    cv = csub.add_parser("verify")
    cv.add_argument("--chart", choices=("two", "three-corner"), required=True)
    cv.add_argument("--samples", type=int, default=10_000)
    cv.add_argument("--seed", type=int)
    cv.add_argument("--region", type=float, default=0.3)
    cv.set_defaults(func=_cmd_charts_verify)

    k = sub.add_parser("cones", help="cone-angle calculus")
    ksub = k.add_subparsers(dest="subcommand", required=True)
    kc = ksub.add_parser("classify")
    kc.add_argument("--genus", type=int, required=True)
    kc.add_argument("--curvature", type=int, choices=(-1, 0, 1), required=True)
    kc.add_argument("--beta", required=True, help="comma-separated rationals, e.g. 1/2,2/3")
    kc.set_defaults(func=_cmd_cones_classify)

    fl = sub.add_parser("flat", help="flat conic metrics")
    flsub = fl.add_subparsers(dest="subcommand", required=True)
    fe = flsub.add_parser("expand")
    fe.add_argument("--beta1", required=True)
    fe.add_argument("--beta2", required=True)
    fe.add_argument("--order", type=int, default=4)
    fe.set_defaults(func=_cmd_flat_expand)
    fp = flsub.add_parser("probe")
    fp.add_argument("--beta", required=True)
    fp.add_argument("--points", help="semicolon-separated re,im pairs (default: unit roots)")
    fp.add_argument("--index", type=int, default=0)
    fp.add_argument("--radii", default="1e-2,3.16e-3,1e-3,3.16e-4,1e-4")
    fp.set_defaults(func=_cmd_flat_probe)

    g = sub.add_parser("phg", help="asymptotic-series tables")
    gsub = g.add_subparsers(dest="subcommand", required=True)
    gi = gsub.add_parser("index")
    gi.add_argument("--beta", required=True)
    gi.add_argument("--cutoff", required=True)
    gi.set_defaults(func=_cmd_phg_index)
    gu = gsub.add_parser("u0")
    gu.add_argument("--order", type=int, default=8)
    gu.set_defaults(func=_cmd_phg_u0)
    gr = gsub.add_parser("recurse")
    gr.add_argument("--beta", required=True)
    gr.add_argument("--steps", type=int, default=2)
    gr.add_argument("--truncation", default="4")
    gr.add_argument("--assign", action="append", help="free coefficient, e.g. 'a[1,1,c]=1'")
    gr.set_defaults(func=_cmd_phg_recurse)

    s = sub.add_parser("solve", help="nonlinear Liouville solves")
    ssub = s.add_subparsers(dest="subcommand", required=True)
    sh = ssub.add_parser("hyperbolic")
    sh.add_argument("--beta", required=True, help="merged cone parameter, e.g. 1/2")
    sh.add_argument("--mesh", default="96x24")
    sh.add_argument("--rmin", type=float, default=1e-3)
    sh.add_argument("--rmax", type=float, default=0.7)
    sh.add_argument("--tol", type=float, default=1e-10)
    sh.add_argument("--series-order", type=int, default=4)
    sh.add_argument("--seed", type=int)
    sh.add_argument("--field-out", help="CSV dump of the correction field")
    sh.set_defaults(func=_cmd_solve_hyperbolic)
    sp = ssub.add_parser("spherical")
    sp.add_argument("--beta", required=True, help="comma-separated cone parameters; last sits at infinity")
    sp.add_argument("--points", help="finite cone points as re,im;re,im (default layout)")
    sp.add_argument("--mesh", default="129x24")
    sp.add_argument("--extent", type=float, default=6.0, help="log-radius half-width")
    sp.add_argument("--rmin", type=float, help="inner truncation radius (overrides --extent)")
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.add_argument("--margin", type=float, default=0.05)
    sp.add_argument("--no-guard", action="store_true")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=_cmd_solve_spherical)

    ft = sub.add_parser("fit", help="slope report for a decay family CSV")
    ft.add_argument("--input", required=True)
    ft.add_argument("--N", type=int, required=True)
    ft.add_argument("--terms", type=int, default=0, help="also peel this many power terms")
    ft.set_defaults(func=_cmd_fit)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (
        solver.DivergenceError,
        solver.NonconvergenceError,
        solver.FootballDegeneracyError,
        phg.IndicialCollisionError,
        ArithmeticError,
    ) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
