import argparse
import csv
import json
import logging
import os
import sys
from collections.abc import Sequence
from fractions import Fraction
from pathlib import Path
from typing import Any, TextIO

import numpy as np

from iems.catalog import FAMILIES, default_grid, get_family_catalog, get_family_options
from iems.config import ConfigError, get_settings, validate_settings
from iems.integrator import (
    IntegrationError,
    convergence_study,
    stability_threshold_check,
    write_study_csv,
)
from iems.kernels import KernelError, report_to_json, toeplitz_verify, write_spectrum_csv
from iems.numcore import NumcoreError
from iems.polyring import PolyringError, RootReport, poly_roots
from iems.problems import (
    PRESET_NAMES,
    ProblemConfigError,
    build_problem,
    load_problem_config,
    parse_problem_config,
)
from iems.schemes import (
    SchemeError,
    SchemeTriad,
    characteristic_triple,
    make_scheme,
    scheme_to_json,
    truncation_leading,
)
from iems.symbolcalc import (
    CURVE_HEADER,
    SymbolError,
    indicator_sweep,
    indicators,
    theta_curves,
    write_theta_curves_csv,
)
from iems.tables import (
    TABLE_HEADER,
    TableError,
    build_tables,
    row_cells,
    truncation_closed_form,
    write_table_csv,
)

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2

DEFAULT_STEP_COUNTS = (80, 160, 320, 640)
SWEEP_HEADER = ("param", "sigma_F", "sigma_E", "lambda_I", "intensity", "step_ratio")
_FAMILY_CHOICES = tuple(name.lower() for name in FAMILIES) + ("euler",)
_NUMERICAL_ERRORS = (
    SchemeError,
    SymbolError,
    KernelError,
    IntegrationError,
    PolyringError,
    NumcoreError,
    TableError,
)

# top-level flag dest -> env var read by iems.config
_SETTING_FLAGS = {
    "threads": "IMEX_THREADS",
    "circle_tol": "IMEX_CIRCLE_TOL",
    "pairing_tol": "IMEX_PAIRING_TOL",
    "refine_tol": "IMEX_REFINE_TOL",
    "toeplitz_max_n": "IMEX_TOEPLITZ_MAX_N",
    "power_tol": "IMEX_POWER_TOL",
    "power_max_iter": "IMEX_POWER_MAX_ITER",
    "power_seed": "IMEX_POWER_SEED",
    "blowup": "IMEX_BLOWUP",
    "log_level": "IMEX_LOG_LEVEL",
}


class UsageError(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _default_grids_epilog() -> str:
    lines = ["default parameter grids:"]
    for name, options in get_family_catalog()["families"].items():
        for k, grid in options["default_grid"].items():
            values = ", ".join(str(value) for value in grid)
            lines.append(f"  {name}{k} {options['param_name']}: {values}")
    return "\n".join(lines)


def _parse_param(raw: str) -> Fraction:
    try:
        return Fraction(raw.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"invalid parameter value {raw!r}") from exc


def _parse_param_grid(raw: str) -> list[float]:
    parts = raw.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"--param-grid expects lo:hi:n, got {raw!r}")
    try:
        lo, hi, count = float(Fraction(parts[0])), float(Fraction(parts[1])), int(parts[2])
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"--param-grid expects lo:hi:n, got {raw!r}") from exc
    if count < 1 or hi < lo:
        raise argparse.ArgumentTypeError(f"--param-grid needs lo <= hi and n >= 1, got {raw!r}")
    return np.linspace(lo, hi, count).tolist()


def _parse_taus(raw: str) -> list[float]:
    try:
        return [float(Fraction(item.strip())) for item in raw.split(",") if item.strip()]
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"--taus expects comma separated step sizes, got {raw!r}") from exc


def _add_scheme_flags(parser: argparse.ArgumentParser, *, param: bool = True) -> None:
    parser.add_argument("--family", required=True, type=str.lower, choices=_FAMILY_CHOICES)
    parser.add_argument("--k", type=int, default=None, help="order (implied for euler)")
    if param:
        parser.add_argument("--param", type=_parse_param, default=None, help="family parameter, e.g. 2 or 6/5")


def _add_grid_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--grid", type=int, default=None, help="theta samples on [0, pi] (IMEX_THETA_GRID)")
    parser.add_argument("--tol", type=float, default=None, help="refinement tolerance (IMEX_REFINE_TOL)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="iems",
        description="Implicit-explicit multistep scheme construction, stability indicators and convergence checks.",
        epilog=_default_grids_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    settings = parser.add_argument_group("settings (override the IMEX_* env vars)")
    settings.add_argument("--threads", type=int, default=None)
    settings.add_argument("--circle-tol", type=float, default=None)
    settings.add_argument("--pairing-tol", type=float, default=None)
    settings.add_argument("--refine-tol", type=float, default=None)
    settings.add_argument("--toeplitz-max-n", type=int, default=None)
    settings.add_argument("--power-tol", type=float, default=None)
    settings.add_argument("--power-max-iter", type=int, default=None)
    settings.add_argument("--power-seed", type=int, default=None)
    settings.add_argument("--blowup", type=float, default=None, help="norm treated as blow-up")
    settings.add_argument("--log-level", type=str.upper, default=None)
    settings.add_argument("--strict-params", action="store_true", help="reject parameters below the zero-stability threshold")
    commands = parser.add_subparsers(dest="command", required=True)

    scheme = commands.add_parser("scheme", help="print coefficients, root reports and truncation constants")
    _add_scheme_flags(scheme)

    indicator = commands.add_parser("indicators", help="print sigma_F, sigma_E, lambda_I and the intensity")
    _add_scheme_flags(indicator)
    _add_grid_flags(indicator)

    sweep = commands.add_parser("sweep", help="indicators across a parameter grid (CSV)")
    _add_scheme_flags(sweep, param=False)
    sweep.add_argument("--param", type=_parse_param, action="append", default=None, dest="params")
    sweep.add_argument("--param-grid", type=_parse_param_grid, default=None, help="lo:hi:n")
    sweep.add_argument("--grid", type=int, default=None, help="theta samples on [0, pi]")
    sweep.add_argument("--out", type=Path, default=None)

    verify = commands.add_parser("verify-toeplitz", help="check the Toeplitz spectral bounds at size n")
    _add_scheme_flags(verify)
    _add_grid_flags(verify)
    verify.add_argument("--n", type=int, default=128, help="Toeplitz size (default 128)")
    verify.add_argument("--out", type=Path, default=None, help="spectrum CSV path")

    curves = commands.add_parser("curves", help="theta curves 1/|a|, |c/a|, Re(b/a) (CSV)")
    _add_scheme_flags(curves)
    curves.add_argument("--points", type=int, default=512)
    curves.add_argument("--out", type=Path, default=None)

    converge = commands.add_parser("converge", help="convergence study on a manufactured problem")
    _add_scheme_flags(converge)
    source = converge.add_mutually_exclusive_group()
    source.add_argument("--problem", type=str.upper, choices=PRESET_NAMES, default=None)
    source.add_argument("--config", type=Path, default=None, help="JSON problem config")
    converge.add_argument("--mu0", type=float, default=None)
    converge.add_argument("--varpi", type=float, default=None)
    converge.add_argument("--T", type=float, default=None, dest="final_time")
    converge.add_argument("--taus", type=_parse_taus, default=None, help="comma separated, strictly decreasing")
    converge.add_argument("--out", type=Path, default=None)

    tables = commands.add_parser("tables", help="computed indicators against the closed-form catalog")
    tables.add_argument("--family", nargs="+", type=str.lower, choices=_FAMILY_CHOICES[:-1], default=None)
    tables.add_argument("--k", type=int, action="append", default=None, dest="orders")
    tables.add_argument("--param", type=_parse_param, action="append", default=None, dest="params")
    tables.add_argument("--grid", type=int, default=None)
    tables.add_argument("--out", type=Path, default=None, help="output directory, one CSV per family")
    return parser


def _scheme_from_args(args: argparse.Namespace) -> SchemeTriad:
    family = args.family.upper()
    k = args.k
    if family == "EULER":
        if k not in (None, 1):
            raise UsageError("euler is the order-1 member of the BDF family.")
        family, k = "BDF", 1
    if k is None:
        raise UsageError(f"--k is required for family {args.family}.")
    if k not in get_family_options(family)["orders"]:
        raise UsageError(f"unsupported order: {family} k={k}")
    param = getattr(args, "param", None)
    if family == "BDF" and param is not None:
        raise UsageError("BDF takes no family parameter.")
    return make_scheme(family, k, param)


def _root_payload(report: RootReport) -> dict[str, Any]:
    return {
        "roots": [[value.real, value.imag] for value in report.roots],
        "max_modulus": report.max_modulus,
        "simple_on_circle": report.simple_on_circle,
    }


def _emit_json(payload: Any, out: TextIO) -> None:
    out.write(json.dumps(payload, indent=2) + "\n")


def cmd_scheme(args: argparse.Namespace, out: TextIO) -> int:
    scheme = _scheme_from_args(args)
    triple = characteristic_triple(scheme)
    truncation = truncation_leading(scheme)
    payload: dict[str, Any] = {
        "scheme": scheme_to_json(scheme),
        "label": scheme.label,
        "warnings": list(scheme.warnings),
        "roots": {
            "rho_a": _root_payload(poly_roots(triple.rho_a)),
            "rho_b": _root_payload(poly_roots(triple.rho_b)),
            "rho_c": _root_payload(poly_roots(triple.rho_c)),
        },
        "truncation": truncation.model_dump(),
    }
    if scheme.param is not None:
        closed = truncation_closed_form(scheme.family, scheme.k, scheme.param)
        if closed is not None:
            payload["truncation_closed_form"] = {"coeff_u": closed[0], "coeff_F": closed[1]}
    _emit_json(payload, out)
    return EXIT_OK


def cmd_indicators(args: argparse.Namespace, out: TextIO) -> int:
    scheme = _scheme_from_args(args)
    report = indicators(scheme, args.grid, refine_tol=args.tol)
    _emit_json({"scheme": scheme.label, **report.model_dump()}, out)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace, out: TextIO) -> int:
    family = args.family.upper()
    if family in ("BDF", "EULER"):
        raise UsageError("BDF has no family parameter to sweep.")
    if args.k is None:
        raise UsageError("--k is required for sweep.")
    if args.k not in get_family_options(family)["orders"]:
        raise UsageError(f"unsupported order: {family} k={args.k}")
    grid: list[Any] = list(args.params or []) + list(args.param_grid or [])
    if not grid:
        grid = default_grid(family, args.k)

    result = indicator_sweep(family, args.k, grid, grid_size=args.grid)
    target = args.out.open("w", newline="", encoding="utf-8") if args.out else out
    try:
        writer = csv.writer(target)
        writer.writerow(SWEEP_HEADER)
        for row in result.rows:
            report = row.report
            writer.writerow(
                [
                    format(value, ".17g")
                    for value in (
                        row.param,
                        report.sigma_F,
                        report.sigma_E,
                        report.lambda_I,
                        report.intensity,
                        report.step_ratio,
                    )
                ]
            )
    finally:
        if args.out:
            target.close()

    summary = sys.stderr if args.out is None else out
    summary.write(f"argmax lambda_I {result.argmax_lambda_I:.6g} value {result.max_lambda_I:.6g}\n")
    summary.write(f"argmax intensity {result.argmax_intensity:.6g} value {result.max_intensity:.6g}\n")
    return EXIT_OK


def cmd_verify_toeplitz(args: argparse.Namespace, out: TextIO) -> int:
    scheme = _scheme_from_args(args)
    report = indicators(scheme, args.grid, refine_tol=args.tol)
    verification = toeplitz_verify(scheme, args.n, report, with_spectrum=args.out is not None)
    if args.out is not None:
        write_spectrum_csv(verification, args.out)
    _emit_json(report_to_json(verification), out)
    return EXIT_OK if verification.bounds_ok else EXIT_NUMERICAL


def cmd_curves(args: argparse.Namespace, out: TextIO) -> int:
    scheme = _scheme_from_args(args)
    curves = theta_curves(scheme, args.points)
    if args.out is not None:
        write_theta_curves_csv(curves, args.out)
        out.write(f"wrote {len(curves.theta)} rows to {args.out}\n")
        return EXIT_OK
    writer = csv.writer(out)
    writer.writerow(CURVE_HEADER)
    for row in zip(curves.theta, curves.inv_abs_a, curves.abs_c_over_a, curves.re_b_over_a):
        writer.writerow([format(value, ".17g") for value in row])
    return EXIT_OK


def _problem_from_args(args: argparse.Namespace):
    overrides = {
        key: value
        for key, value in (("mu0", args.mu0), ("varpi", args.varpi), ("T", args.final_time))
        if value is not None
    }
    if args.config is not None:
        config = load_problem_config(args.config)
        if overrides:
            config = parse_problem_config({**config.model_dump(), **overrides})
        return build_problem(config)
    return build_problem(parse_problem_config({"preset": args.problem or "P1", **overrides}))


def cmd_converge(args: argparse.Namespace, out: TextIO) -> int:
    scheme = _scheme_from_args(args)
    problem = _problem_from_args(args)
    taus = args.taus or [problem.T / steps for steps in DEFAULT_STEP_COUNTS]

    check = stability_threshold_check(problem, scheme)
    out.write(check.message + "\n")
    study = convergence_study(problem, scheme, taus)
    if args.out is not None:
        write_study_csv(study, args.out)
    for row in study.rows:
        if row.blew_up:
            out.write(f"tau {row.tau:.6g}: blow-up detected at step {row.failed_step}\n")
    verdict = "PASS" if study.passed else "FAIL"
    out.write(f"slope {study.slope:.2f} {verdict}\n")
    if study.unstable:
        return EXIT_NUMERICAL
    return EXIT_OK if study.passed else EXIT_NUMERICAL


def cmd_tables(args: argparse.Namespace, out: TextIO) -> int:
    families = [name.upper() for name in (args.family or [f.lower() for f in FAMILIES])]
    failures = 0
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
    writer = csv.writer(out) if args.out is None else None
    if writer is not None:
        writer.writerow(TABLE_HEADER)

    for family in families:
        rows = build_tables([family], args.orders, args.params, grid_size=args.grid)
        failures += sum(1 for row in rows if row.passed is False)
        if args.out is not None:
            path = write_table_csv(rows, args.out / f"table_{family.lower()}.csv")
            out.write(f"{family}: {len(rows)} rows -> {path}\n")
            continue
        for row in rows:
            writer.writerow(row_cells(row))
    if failures:
        LOGGER.warning("Closed form table failures=%s", failures)
        return EXIT_NUMERICAL
    return EXIT_OK


_COMMANDS = {
    "scheme": cmd_scheme,
    "indicators": cmd_indicators,
    "sweep": cmd_sweep,
    "verify-toeplitz": cmd_verify_toeplitz,
    "curves": cmd_curves,
    "converge": cmd_converge,
    "tables": cmd_tables,
}


def _apply_setting_flags(args: argparse.Namespace) -> None:
    changed = False
    for dest, env_name in _SETTING_FLAGS.items():
        value = getattr(args, dest)
        if value is not None:
            os.environ[env_name] = str(value)
            changed = True
    if args.strict_params:
        os.environ["IMEX_STRICT_PARAMS"] = "1"
        changed = True
    if changed:
        get_settings.cache_clear()


def main(argv: Sequence[str] | None = None, out: TextIO | None = None) -> int:
    out = sys.stdout if out is None else out
    try:
        args = build_parser().parse_args(argv)
        _apply_setting_flags(args)
        logging.basicConfig(
            level=get_settings().log_level,
            format="%(levelname)s %(name)s: %(message)s",
        )
        validate_settings()
        return _COMMANDS[args.command](args, out)
    except (UsageError, ConfigError, ProblemConfigError) as exc:
        sys.stderr.write(f"iems: error: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        sys.stderr.write(f"iems: error: {exc}\n")
        return EXIT_USAGE
    except _NUMERICAL_ERRORS as exc:
        LOGGER.error("Numerical failure command=%s error=%s", argv, exc)
        sys.stderr.write(f"iems: numerical failure: {exc}\n")
        return EXIT_NUMERICAL
