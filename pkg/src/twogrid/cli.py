"""Command-line entry point (``twogrid`` / ``python -m twogrid``)."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, MeshError, SolverError, SpaceMismatchError, TwoGridError
from .harness import (StudyPlan, StudyReport, emit_report, load_plan, report_csv, run_cell,
                      run_convergence_study)
from .mesh import mesh_stats, refine, unit_square_mesh
from .spaces import FAMILIES, build_space
from .stepper import ALGORITHMS, SCHEMES
from .mms import CASES

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


def _study(args):
    plan = load_plan(args.plan)
    report = run_convergence_study(plan, serial=args.serial)
    if plan.out_csv:
        emit_report(report, "csv", plan.out_csv)
    if plan.out_svg:
        emit_report(report, "svg_plot", plan.out_svg)
    sys.stdout.write(report_csv(report))


def _run(args):
    plan = StudyPlan(algorithm=args.algorithm, family=args.family, case=args.case,
                     levels=(args.n,), coupling=args.coupling, scheme=args.scheme,
                     dt_rule="fixed:{}".format(args.N), T=args.T,
                     fine_convection=args.fine_convection)
    row = run_cell(plan, args.n)
    if args.serial:
        row.wall_s = 0.0
    sys.stdout.write(report_csv(StudyReport(plan, [row])))


def _mesh_info(args):
    m = unit_square_mesh(args.n)
    if args.refine:
        m = refine(m, args.refine)
    stats = mesh_stats(m)
    print("vertices,{}".format(m.num_vertices))
    print("triangles,{}".format(m.num_triangles))
    print("edges,{}".format(m.num_edges))
    for k in ("h_max", "min_angle", "regularity_ratio"):
        print("{},{:.12g}".format(k, stats[k]))


def _infsup(args):
    from .saddle import infsup_estimate
    print("{:.12g}".format(infsup_estimate(build_space(unit_square_mesh(args.n), args.family))))


def build_parser():
    p = argparse.ArgumentParser(prog="twogrid", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("study", help="run a convergence study from a TOML plan")
    s.add_argument("--plan", required=True)
    s.add_argument("--serial", action="store_true",
                   help="single-threaded, wall times written as 0 (bitwise reproducible)")
    s.set_defaults(func=_study)

    r = sub.add_parser("run", help="single simulation; final errors as CSV")
    r.add_argument("--algorithm", choices=ALGORITHMS, default="galerkin_only")
    r.add_argument("--family", choices=sorted(FAMILIES), default="taylor_hood_2")
    r.add_argument("--case", choices=sorted(CASES), default="polystream")
    r.add_argument("--n", type=int, required=True, help="fine mesh subdivisions per side")
    r.add_argument("--N", type=int, required=True, help="number of time steps")
    r.add_argument("--T", type=float, default=0.5)
    r.add_argument("--scheme", choices=SCHEMES, default="bdf2")
    r.add_argument("--coupling", default="h_half")
    r.add_argument("--fine-convection", choices=("plain", "skew"), default="plain")
    r.add_argument("--serial", action="store_true")
    r.set_defaults(func=_run)

    m = sub.add_parser("mesh-info", help="print mesh statistics")
    m.add_argument("--n", type=int, required=True)
    m.add_argument("--refine", type=int, default=0)
    m.set_defaults(func=_mesh_info)

    i = sub.add_parser("infsup", help="print the discrete inf-sup constant")
    i.add_argument("--family", choices=sorted(FAMILIES), required=True)
    i.add_argument("--n", type=int, required=True)
    i.set_defaults(func=_infsup)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, MeshError, SpaceMismatchError) as exc:
        print("config error: {}".format(exc), file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, TwoGridError) as exc:
        print("solver failure: {}".format(exc), file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print("I/O failure: {}".format(exc), file=sys.stderr)
        return EXIT_IO
    return EXIT_OK
