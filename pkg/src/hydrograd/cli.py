"""Command line interface.

Subcommands: calibrate, validate, twin, gradcheck.  Exit codes: 0 success,
1 invalid input (configuration, files, shapes), 2 numerical failure.
"""

import argparse
import sys

from . import driver
from .dataio import load_config
from .errors import HydrogradError, NumericalError
from .twin import generate_twin, parse_twin_config, write_twin_dataset

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERIC = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hydrograd",
        description="Distributed rainfall-runoff calibration with exact "
                    "adjoint gradients and descriptor-based mappings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("calibrate", help="optimize a mapping on a dataset")
    p.add_argument("config", help="run configuration file")
    p = sub.add_parser("validate", help="score a saved control, no optimization")
    p.add_argument("config", help="run configuration file")
    p.add_argument("control", help="control file written by a calibration run")
    p = sub.add_parser("twin", help="generate a synthetic dataset")
    p.add_argument("config", help="twin configuration file")
    p = sub.add_parser("gradcheck", help="adjoint vs finite-difference check")
    p.add_argument("config", help="run configuration file")
    return parser


def _print_scores(result) -> None:
    for label in ("Cal", "S_Val", "T_Val", "S-T_Val"):
        for row in result.metrics.get(label, []):
            print(f"{label} gauge {row['name']} "
                  f"nse {row['nse']:.6g} kge {row['kge']:.6g}")


def _cmd_calibrate(args) -> int:
    cfg = load_config(args.config)
    result = driver.run_calibration(cfg)
    if result.trace is not None:
        print(f"termination {result.trace.termination} "
              f"after {len(result.trace)} iterations")
    print(f"final cost {result.final_cost:.9g}")
    _print_scores(result)
    print(f"outputs in {cfg.output_dir}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    result = driver.run_validation(cfg, args.control)
    _print_scores(result)
    print(f"outputs in {cfg.output_dir}")
    return EXIT_OK


def _cmd_twin(args) -> int:
    kw, out_dir = parse_twin_config(args.config)
    problem = generate_twin(**kw)
    cfg_path = write_twin_dataset(problem, out_dir)
    print(f"dataset in {out_dir}")
    print(f"calibration config {cfg_path}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    cfg = load_config(args.config)
    report = driver.run_gradcheck(cfg)
    for row in report["components"]:
        rel = "n/a" if row["rel"] != row["rel"] else f"{row['rel']:.3e}"
        print(f"cell {row['cell']:5d} {row['param']:<4s} "
              f"adjoint {row['adjoint']: .10e} fd {row['fd']: .10e} rel {rel}")
    status = "PASS" if report["ok"] else "FAIL"
    print(f"{status} worst relative error {report['worst']:.3e} "
          f"(tolerance {report['tol']:g}, {len(report['components'])} components)")
    return EXIT_OK if report["ok"] else EXIT_NUMERIC


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "calibrate": _cmd_calibrate,
        "validate": _cmd_validate,
        "twin": _cmd_twin,
        "gradcheck": _cmd_gradcheck,
    }
    try:
        return handlers[args.command](args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except HydrogradError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
