"""Command line entry point: ``pdwg solve --domain cube --solution u1 --n 8``."""

from __future__ import annotations

import argparse
import logging
import sys

from .element import StabilizationWeights
from .manufactured import SOLUTIONS
from .quadrature import DEFAULT_ORDER
from .solver import SolverConfig
from .study import RunConfig, StudyError, Tolerance, compare_to_reference, load_reference, run_study


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdwg", description="Lowest-order PDWG div-curl solver")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="solve a manufactured problem on one or more meshes")
    p.add_argument("--domain", choices=["cube", "a", "b", "c"], default="cube")
    p.add_argument("--solution", choices=sorted(SOLUTIONS), default="u1")
    p.add_argument("--n", type=int, help="cells per unit length")
    p.add_argument("--refinements", type=_int_list, help="comma separated resolutions, e.g. 2,4,8")
    p.add_argument("--rho1", type=float, default=1.0)
    p.add_argument("--rho2", type=float, default=1.0)
    p.add_argument("--rho3", type=float, default=1.0)
    p.add_argument("--quad", type=int, default=DEFAULT_ORDER, help="Gauss points per direction")
    p.add_argument("--solver", choices=["direct", "iterative"], default="direct")
    p.add_argument("--csv")
    p.add_argument("--json")
    p.add_argument("--vtk", help="write the finest solution as a legacy VTK file")
    p.add_argument("--reference", nargs="?", const="builtin",
                   help="reference table JSON; without a value the shipped tables are used")
    p.add_argument("--tolerance", type=float, default=2.0, help="allowed error factor")
    p.add_argument("--rate-tolerance", type=float, default=0.2)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _fmt(value, spec):
    return "-" if value is None else format(value, spec)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    refinements = args.refinements or ([args.n] if args.n is not None else None)
    if not refinements:
        print("error: give --n or --refinements", file=sys.stderr)
        return 2
    try:
        config = RunConfig(
            domain=args.domain,
            solution=args.solution,
            refinements=tuple(refinements),
            rho=StabilizationWeights(args.rho1, args.rho2, args.rho3),
            quadrature=args.quad,
            solver=SolverConfig(method=args.solver),
            csv_path=args.csv,
            json_path=args.json,
            vtk_path=args.vtk,
        )
        report = run_study(config)
    except (ValueError, KeyError, StudyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    print(f"{'n':>4} {'h':>10} {'dofs':>9} {'error':>11} {'rms error':>11} {'rate':>6} {'residual':>9} {'s':>7}")
    for r in report.rows:
        print(f"{r.n:>4} {r.h:>10.4g} {r.dofs:>9} {r.error:>11.3e} {r.rms_error:>11.3e} "
              f"{_fmt(r.rate, '6.2f'):>6} {r.residual:>9.1e} {r.seconds:>7.2f}")

    if args.reference is None:
        return 0
    try:
        reference = load_reference(None if args.reference == "builtin" else args.reference)
        verdicts = compare_to_reference(report, reference,
                                        Tolerance(args.tolerance, args.rate_tolerance))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    failed = 0
    for v in verdicts:
        status = "PASS" if v.passed else "FAIL"
        failed += not v.passed
        print(f"{status} n={v.n} {v.norm} error {v.error:.3e} vs {v.reference_error:.3e}, "
              f"rate {_fmt(v.rate, '.2f')} vs {_fmt(v.reference_rate, '.2f')}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
