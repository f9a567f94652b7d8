import csv
import logging
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Literal

import numpy as np
from numpy.polynomial import polynomial as npoly
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import minimize_scalar

from iems.config import get_settings, thread_count
from iems.polyring import Poly
from iems.schemes import SchemeTriad, exact_coefficients, make_scheme

LOGGER = logging.getLogger(__name__)

_VANISHING_TOL = 1e-12

CURVE_HEADER = ("theta", "inv_abs_a", "abs_c_over_a", "re_b_over_a")


class SymbolError(RuntimeError):
    pass


class TrigSymbol(BaseModel):
    """One-sided trigonometric series sum_j coeffs[j] exp(i j theta).

    Evaluated through its expansion in powers of exp(i theta) - 1, whose coefficients come
    from the exact triad; near theta = 0 the plain power form cancels badly once the
    coefficients grow large.
    """

    model_config = ConfigDict(frozen=True)

    coeffs: tuple[float, ...]
    shifted: tuple[float, ...]

    def __call__(self, theta: Any) -> Any:
        half = 0.5 * np.asarray(theta, dtype=float)
        return npoly.polyval(2j * np.sin(half) * np.exp(1j * half), self.shifted)


class IndicatorReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    sigma_F: float
    sigma_E: float
    lambda_I: float
    intensity: float
    step_ratio: float
    theta_F: float
    theta_E: float
    theta_I: float
    grid_size: int
    refined: bool


class SweepRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    param: float
    report: IndicatorReport
    warnings: tuple[str, ...] = ()


class SweepResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: str
    k: int
    rows: list[SweepRow] = Field(default_factory=list)
    argmax_lambda_I: float
    max_lambda_I: float
    argmax_intensity: float
    max_intensity: float


class ThetaCurves(BaseModel):
    model_config = ConfigDict(frozen=True)

    theta: tuple[float, ...]
    inv_abs_a: tuple[float, ...]
    abs_c_over_a: tuple[float, ...]
    re_b_over_a: tuple[float, ...]


def symbol_of(scheme: SchemeTriad, which: Literal["a", "b", "c"]) -> TrigSymbol:
    if which not in {"a", "b", "c"}:
        raise SymbolError(f"unknown coefficient vector {which!r}.")
    exact = exact_coefficients(scheme)["abc".index(which)]
    shifted = Poly(coeffs=exact).compose(Poly.of(1, 1))
    return TrigSymbol(
        coeffs=getattr(scheme, which),
        shifted=tuple(float(x) for x in shifted.coeffs) or (0.0,),
    )


def _symbol_values(scheme: SchemeTriad, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    a = symbol_of(scheme, "a")(theta)
    if np.min(np.abs(a)) < _VANISHING_TOL:
        raise SymbolError(f"symbol vanishes on unit circle for {scheme.label}")
    return a, symbol_of(scheme, "b")(theta), symbol_of(scheme, "c")(theta)


def _quantities(scheme: SchemeTriad) -> dict[str, Callable[[Any], Any]]:
    a_sym = symbol_of(scheme, "a")
    b_sym = symbol_of(scheme, "b")
    c_sym = symbol_of(scheme, "c")
    return {
        "F": lambda t: 1.0 / np.abs(a_sym(t)),
        "E": lambda t: np.abs(c_sym(t) / a_sym(t)),
        "I": lambda t: np.real(b_sym(t) / a_sym(t)),
    }


def _extremize(
    func: Callable[[Any], Any],
    theta: np.ndarray,
    values: np.ndarray,
    *,
    maximize: bool,
    tol: float,
) -> tuple[float, float, bool]:
    sign = -1.0 if maximize else 1.0
    index = int(np.argmin(sign * values))
    best_theta = float(theta[index])
    best = float(values[index])
    lo = float(theta[max(index - 1, 0)])
    hi = float(theta[min(index + 1, len(theta) - 1)])
    if hi <= lo:
        return best, best_theta, False

    result = minimize_scalar(
        lambda t: sign * float(func(t)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": tol},
    )
    if result.success and float(result.fun) < sign * best:
        return sign * float(result.fun), float(result.x), True
    return best, best_theta, False


def _sampling(grid_size: int | None, refine_tol: float | None) -> tuple[np.ndarray, float]:
    settings = get_settings()
    grid_size = settings.theta_grid if grid_size is None else grid_size
    refine_tol = settings.refine_tol if refine_tol is None else refine_tol
    if grid_size < 3:
        raise SymbolError(f"grid_size must be at least 3, got {grid_size}.")
    return np.linspace(0.0, np.pi, grid_size), refine_tol


def indicators(
    scheme: SchemeTriad,
    grid_size: int | None = None,
    *,
    refine_tol: float | None = None,
) -> IndicatorReport:
    theta, refine_tol = _sampling(grid_size, refine_tol)
    a, b, c = _symbol_values(scheme, theta)
    funcs = _quantities(scheme)

    sigma_F, theta_F, refined_F = _extremize(
        funcs["F"], theta, 1.0 / np.abs(a), maximize=True, tol=refine_tol
    )
    sigma_E, theta_E, refined_E = _extremize(
        funcs["E"], theta, np.abs(c / a), maximize=True, tol=refine_tol
    )
    lambda_I, theta_I, refined_I = _extremize(
        funcs["I"], theta, np.real(b / a), maximize=False, tol=refine_tol
    )
    if lambda_I <= 0:
        LOGGER.warning("Non-positive dissipation factor scheme=%s lambda_I=%s", scheme.label, lambda_I)

    return IndicatorReport(
        sigma_F=sigma_F,
        sigma_E=sigma_E,
        lambda_I=lambda_I,
        intensity=lambda_I / sigma_E,
        step_ratio=lambda_I / sigma_F,
        theta_F=theta_F,
        theta_E=theta_E,
        theta_I=theta_I,
        grid_size=len(theta),
        refined=refined_F or refined_E or refined_I,
    )


def _sweep_row(family: str, k: int, param: Any, grid_size: int | None) -> SweepRow:
    scheme = make_scheme(family, k, param)
    return SweepRow(
        param=float(scheme.param),
        report=indicators(scheme, grid_size),
        warnings=scheme.warnings,
    )


def indicator_sweep(
    family: str,
    k: int,
    param_grid: Sequence[Any],
    *,
    grid_size: int | None = None,
) -> SweepResult:
    if not param_grid:
        raise SymbolError("parameter grid is empty.")

    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        rows = list(pool.map(lambda p: _sweep_row(family, k, p, grid_size), param_grid))

    best_lambda = max(rows, key=lambda row: row.report.lambda_I)
    best_intensity = max(rows, key=lambda row: row.report.intensity)
    LOGGER.info(
        "Sweep family=%s k=%s points=%s argmax_lambda_I=%s argmax_intensity=%s",
        family,
        k,
        len(rows),
        best_lambda.param,
        best_intensity.param,
    )
    return SweepResult(
        family=family.upper(),
        k=k,
        rows=rows,
        argmax_lambda_I=best_lambda.param,
        max_lambda_I=best_lambda.report.lambda_I,
        argmax_intensity=best_intensity.param,
        max_intensity=best_intensity.report.intensity,
    )


def theta_curves(scheme: SchemeTriad, n_points: int) -> ThetaCurves:
    if n_points < 2:
        raise SymbolError(f"n_points must be at least 2, got {n_points}.")
    theta = np.linspace(0.0, np.pi, n_points)
    a, b, c = _symbol_values(scheme, theta)
    return ThetaCurves(
        theta=tuple(theta.tolist()),
        inv_abs_a=tuple((1.0 / np.abs(a)).tolist()),
        abs_c_over_a=tuple(np.abs(c / a).tolist()),
        re_b_over_a=tuple(np.real(b / a).tolist()),
    )


def write_theta_curves_csv(curves: ThetaCurves, path: str | Path) -> Path:
    target = Path(path)
    with target.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(CURVE_HEADER)
        for row in zip(curves.theta, curves.inv_abs_a, curves.abs_c_over_a, curves.re_b_over_a):
            writer.writerow([format(value, ".17g") for value in row])
    return target


def max_re_b_over_a(
    scheme: SchemeTriad,
    grid_size: int | None = None,
    *,
    refine_tol: float | None = None,
) -> float:
    theta, refine_tol = _sampling(grid_size, refine_tol)
    a, b, _ = _symbol_values(scheme, theta)
    value, _, _ = _extremize(
        _quantities(scheme)["I"], theta, np.real(b / a), maximize=True, tol=refine_tol
    )
    return value
