"""Command-line surface.

Subcommands: project, check-order, gap, transform, characterize,
demo-geodesic, suite.  Data goes to stdout or --out as byte-stable JSON
(sorted keys, 17-significant-digit floats); the suite additionally writes
a CSV report, and the report path renders matplotlib figures next to it
when --plot-dir is given.

Exit codes: 0 success / order holds, 1 violation / order does not hold,
2 usage error (malformed input names the offending field), 3 solver
failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import json_io
from .characterize import check_volume_expansion
from .demo import run_geodesic_demo
from .duality import duality_gap, solve_dual_backward, solve_dual_forward, verify_potential_property
from .lp import SimplexError, SimplexSolver
from .measures import Grid
from .orders import OrderSpec, check_convex_order, check_subharmonic_order, check_trivial_order
from .projection import (
    ConeEmptyError,
    project_backward_convex,
    project_backward_convex_lp,
    project_backward_subharmonic,
    project_forward_convex,
    project_forward_subharmonic,
)
from .suite import run_suite
from .transforms import legendre, q2, q2bar, q2e, subharmonic_envelope

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2
EXIT_SOLVER = 3

log = logging.getLogger("stochproj")


def _setup_logging() -> None:
    level = os.environ.get("STOCHPROJ_LOG", "error").upper()
    if level not in ("ERROR", "INFO", "DEBUG"):
        level = "ERROR"
    logging.basicConfig(level=getattr(logging, level),
                        format="%(levelname)s %(name)s: %(message)s")


def _parse_grid_flag(text: str, dim_hint: int | None = None) -> Grid:
    """--grid lo,hi,n (1D) or lo,hi,n;lo,hi,n (per axis)."""
    axes = [a for a in text.split(";") if a]
    los, his, ns = [], [], []
    for ax in axes:
        parts = ax.split(",")
        if len(parts) != 3:
            raise json_io.SchemaError("grid", "expected lo,hi,n per axis")
        los.append(float(parts[0]))
        his.append(float(parts[1]))
        ns.append(int(parts[2]))
    if len(axes) == 1 and dim_hint and dim_hint > 1:
        los, his, ns = los * dim_hint, his * dim_hint, ns * dim_hint
    return Grid(lo=los, hi=his, n=tuple(ns))


def _read_measure(path: str, context: str):
    try:
        with open(path) as fh:
            return json_io.load_measure(fh.read(), context)
    except FileNotFoundError:
        raise json_io.SchemaError(context, f"file not found: {path}")


def _emit(obj, out: str | None) -> None:
    text = json_io.dumps(obj, indent=2) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _result_json(res) -> dict:
    out = {
        "projection": res.projection.to_json_dict(),
        "source": res.coupling.source.to_json_dict(),
        "target": res.coupling.target.to_json_dict(),
        "coupling": [[int(i), int(j), float(v)]
                     for i, j, v in res.coupling.to_triplets(1e-14)],
        "cost": float(res.cost),
        "dual_value": float(res.dual_value),
        "duality_gap": float(res.duality_gap),
        "order_certificate": res.order_certificate.to_json_dict(),
        "direction": res.direction,
        "order": res.order_kind,
    }
    from .transforms import GridFunction
    if isinstance(res.dual_potential, GridFunction):
        out["dual_potential"] = res.dual_potential.to_json_dict()
    return out


def _load_result(path: str, context: str):
    """Rebuild a report-grade ProjectionResult from a result JSON (enough
    structure for the map checks; certificates are not re-verified here)."""
    import json

    from .measures import Coupling
    from .orders import OrderCertificate
    from .projection import ProjectionResult
    from .transforms import GridFunction

    try:
        with open(path) as fh:
            d = json.load(fh)
    except FileNotFoundError:
        raise json_io.SchemaError(context, f"file not found: {path}")
    except json.JSONDecodeError as exc:
        raise json_io.SchemaError(context, f"invalid JSON ({exc.msg})")
    for fieldname in ("projection", "source", "target", "coupling",
                      "cost", "direction", "order"):
        if fieldname not in d:
            raise json_io.SchemaError(f"{context}.{fieldname}", "missing")
    source = json_io.load_measure(d["source"], f"{context}.source")
    target = json_io.load_measure(d["target"], f"{context}.target")
    projection = json_io.load_measure(d["projection"], f"{context}.projection")
    mass = np.zeros((source.n, target.n))
    for i, j, v in d["coupling"]:
        mass[int(i), int(j)] = float(v)
    coupling = Coupling(mass, source, target)
    potential = None
    if "dual_potential" in d:
        potential = json_io.load_grid_function(d["dual_potential"],
                                               f"{context}.dual_potential")
    cert = OrderCertificate(holds=bool(d.get("order_certificate", {})
                                       .get("holds", True)),
                            kind=d["order"])
    return ProjectionResult(projection=projection, coupling=coupling,
                            cost=float(d["cost"]), dual_potential=potential,
                            dual_value=float(d.get("dual_value", 0.0)),
                            duality_gap=float(d.get("duality_gap", 0.0)),
                            order_certificate=cert, direction=d["direction"],
                            order_kind=d["order"])


def _cmd_check_order(args) -> int:
    mu = _read_measure(args.mu, "mu")
    nu = _read_measure(args.nu, "nu")
    if args.kind == "convex":
        cert = check_convex_order(mu, nu)
    elif args.kind == "subharmonic":
        if not args.grid:
            raise json_io.SchemaError("grid", "subharmonic order requires --grid")
        grid = _parse_grid_flag(args.grid, mu.dim)
        cert = check_subharmonic_order(mu, nu, OrderSpec("subharmonic", grid))
    else:
        cert = check_trivial_order(mu, nu)
    _emit(cert.to_json_dict(), args.out)
    return EXIT_OK if cert.holds else EXIT_VIOLATION


def _cmd_project(args) -> int:
    mu = _read_measure(args.mu, "mu")
    nu = _read_measure(args.nu, "nu")
    grid = _parse_grid_flag(args.grid, mu.dim) if args.grid else None
    solver = SimplexSolver()
    if args.dump_lp:
        _dump_program(args, mu, nu, grid)
    if args.order == "convex":
        if args.direction == "backward":
            if grid is not None:
                res = project_backward_convex_lp(mu, nu, grid, solver=solver)
            else:
                res = project_backward_convex(mu, nu, solver=solver)
        else:
            res = project_forward_convex(nu, mu, candidate_support=grid,
                                         solver=solver, dilation=args.dilate)
    else:
        if grid is None:
            raise json_io.SchemaError("grid", "subharmonic projection requires --grid")
        spec = OrderSpec("subharmonic", grid)
        if args.direction == "backward":
            res = project_backward_subharmonic(mu, nu, spec, solver=solver)
        else:
            res = project_forward_subharmonic(nu, mu, spec, solver=solver)
    payload = _result_json(res)
    _emit(payload, args.out)
    if args.coupling_csv:
        with open(args.coupling_csv, "w") as fh:
            fh.write("row,col,mass\n")
            for i, j, v in res.coupling.to_triplets(1e-14):
                fh.write(f"{i},{j},{v:.17g}\n")
    return EXIT_OK


def _dump_program(args, mu, nu, grid) -> None:
    from .projection import (
        _backward_convex_lp,
        _backward_subharmonic_lp,
        _forward_convex_lp,
        _forward_subharmonic_lp,
        default_forward_grid,
    )
    if args.order == "convex":
        if grid is None and args.direction == "backward":
            raise json_io.SchemaError("dump-lp", "--grid required to dump the program")
        Z = (grid or default_forward_grid(mu, nu, args.dilate)).nodes()
        lp, _ = (_backward_convex_lp(mu, nu, Z) if args.direction == "backward"
                 else _forward_convex_lp(mu, nu, Z))
    else:
        if grid is None:
            raise json_io.SchemaError("dump-lp", "--grid required to dump the program")
        lp, _, _ = (_backward_subharmonic_lp(mu, nu, grid)
                    if args.direction == "backward"
                    else _forward_subharmonic_lp(mu, nu, grid))
    lp.dump(args.dump_lp)


def _cmd_gap(args) -> int:
    mu = _read_measure(args.mu, "mu")
    nu = _read_measure(args.nu, "nu")
    grid = _parse_grid_flag(args.grid, mu.dim)
    solver = SimplexSolver()
    if args.order == "convex":
        spec = OrderSpec("convex")
    else:
        spec = OrderSpec("subharmonic", grid)
    if args.direction == "backward":
        primal = (project_backward_convex_lp(mu, nu, grid, solver=solver)
                  if args.order == "convex"
                  else project_backward_subharmonic(mu, nu, spec, solver=solver))
        dual = solve_dual_backward(mu, nu, spec,
                                   grid if args.order == "convex" else None,
                                   solver=solver)
        prop = verify_potential_property(dual, primal.projection, nu)
    else:
        primal = (project_forward_convex(nu, mu, candidate_support=grid, solver=solver)
                  if args.order == "convex"
                  else project_forward_subharmonic(nu, mu, spec, solver=solver))
        dual = solve_dual_forward(mu, nu, spec,
                                  grid if args.order == "convex" else None,
                                  solver=solver)
        prop = verify_potential_property(dual, mu, primal.projection)
    gap = duality_gap(primal, dual)
    _emit({
        "primal": float(primal.cost),
        "dual": float(dual.dual_value),
        "gap": float(gap),
        "potential_property_residual": float(prop.residual),
    }, args.out)
    return EXIT_OK


def _cmd_transform(args) -> int:
    with open(args.input) as fh:
        fn = json_io.load_grid_function(fh.read(), "input")
    op = {"legendre": lambda f: legendre(f, f.grid),
          "q2": q2, "q2bar": q2bar, "envelope": subharmonic_envelope,
          "q2e": q2e}[args.op]
    out = op(fn)
    _emit(out.to_json_dict(), args.out)
    return EXIT_OK


def _cmd_characterize(args) -> int:
    from .characterize import check_inverse_relation, extract_map
    payload: dict = {}
    ok = True
    if args.volume:
        res = _load_result(args.volume, "volume")
        rep = check_volume_expansion(res)
        payload["volume_expansion"] = {
            "conclusive": rep.conclusive,
            "evaluable_nodes": rep.evaluable_nodes,
            "det_passes": rep.det_passes,
            "min_det": None if np.isnan(rep.min_det) else float(rep.min_det),
            "density_passes": rep.density_passes,
            "density_pairs": rep.density_pairs,
            "split_fraction": float(rep.split_fraction),
        }
        if rep.conclusive:
            ok = ok and rep.det_fraction >= 0.95 and rep.density_fraction >= 0.9
    if args.backward and args.forward:
        back = _load_result(args.backward, "backward")
        fwd = _load_result(args.forward, "forward")
        rep = check_inverse_relation(back, fwd)
        payload["inverse_relation"] = {
            "backward_monotone": rep.backward_monotone,
            "forward_monotone": rep.forward_monotone,
            "matched_pairs": rep.matched_pairs,
            "max_inversion_residual": float(rep.max_inversion_residual),
            "conclusive": rep.conclusive,
        }
        ok = ok and rep.backward_monotone and rep.forward_monotone
    elif args.backward or args.forward:
        back_or_fwd = args.backward or args.forward
        res = _load_result(back_or_fwd, "result")
        sample = extract_map(res.coupling, use_barycenter=True)
        payload["map"] = {
            "pairs": sample.size,
            "cyclically_monotone": sample.cyclically_monotone(),
            "split_fraction": float(sample.split_fraction),
        }
        ok = ok and payload["map"]["cyclically_monotone"]
    if not payload:
        raise json_io.SchemaError(
            "characterize", "pass --volume and/or --backward/--forward result files")
    _emit(payload, args.out)
    return EXIT_OK if ok else EXIT_VIOLATION


def _cmd_demo_geodesic(args) -> int:
    demo = run_geodesic_demo()
    payload = demo.to_json_dict()
    _emit(payload, args.out)
    if args.plot_dir:
        from .plots import render_geodesic_demo
        path = render_geodesic_demo(demo.mu, demo.nu, demo.coupling,
                                    demo.midpoint, demo.hull_containment,
                                    args.plot_dir)
        log.info("wrote %s", path)
    return EXIT_OK if demo.cone_left else EXIT_VIOLATION


def _cmd_suite(args) -> int:
    rows = run_suite(seed=args.seed, count=args.count)
    lines = ["invariant,instances,passes,worst_residual"]
    lines += [r.as_csv() for r in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.plot_dir:
        from .plots import render_suite_report
        for p in render_suite_report(rows, args.plot_dir):
            log.info("wrote %s", p)
    every = all(r.passes == r.instances for r in rows)
    return EXIT_OK if every else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stochproj",
                                 description="Wasserstein projections onto "
                                 "stochastic-order cones")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-order", help="decide an order relation")
    p.add_argument("--kind", choices=["convex", "subharmonic", "trivial"],
                   required=True)
    p.add_argument("--grid", help="lo,hi,n per axis, ';'-separated")
    p.add_argument("--out")
    p.add_argument("mu")
    p.add_argument("nu")
    p.set_defaults(func=_cmd_check_order)

    p = sub.add_parser("project", help="compute a projection")
    p.add_argument("--direction", choices=["backward", "forward"], required=True)
    p.add_argument("--order", choices=["convex", "subharmonic"], required=True)
    p.add_argument("--grid", help="lo,hi,n per axis, ';'-separated")
    p.add_argument("--dilate", type=float, default=1.5)
    p.add_argument("--out")
    p.add_argument("--coupling-csv")
    p.add_argument("--dump-lp", help="write the program in sparse triplet form")
    p.add_argument("mu")
    p.add_argument("nu")
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("gap", help="primal + dual + duality gap on one instance")
    p.add_argument("--direction", choices=["backward", "forward"],
                   default="backward")
    p.add_argument("--order", choices=["convex", "subharmonic"], default="convex")
    p.add_argument("--grid", required=True)
    p.add_argument("--out")
    p.add_argument("mu")
    p.add_argument("nu")
    p.set_defaults(func=_cmd_gap)

    p = sub.add_parser("transform", help="apply a grid transform")
    p.add_argument("--op", choices=["legendre", "q2", "q2bar", "envelope", "q2e"],
                   required=True)
    p.add_argument("--out")
    p.add_argument("input")
    p.set_defaults(func=_cmd_transform)

    p = sub.add_parser("characterize", help="map-structure reports")
    p.add_argument("--backward", help="backward projection result JSON")
    p.add_argument("--forward", help="forward projection result JSON")
    p.add_argument("--volume", help="forward subharmonic result JSON")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_characterize)

    p = sub.add_parser("demo-geodesic",
                       help="midpoint of an optimal coupling leaves the cone")
    p.add_argument("--out")
    p.add_argument("--plot-dir")
    p.set_defaults(func=_cmd_demo_geodesic)

    p = sub.add_parser("suite", help="random-instance invariant battery")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--out")
    p.add_argument("--plot-dir")
    p.set_defaults(func=_cmd_suite)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except json_io.SchemaError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError,) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SimplexError, ConeEmptyError, RuntimeError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
