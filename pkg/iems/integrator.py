import csv
import logging
from collections import deque
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from iems.config import get_settings, thread_count
from iems.numcore import SingularMatrixError, factorize, lu_apply
from iems.problems import ProblemSpec
from iems.schemes import SchemeTriad
from iems.symbolcalc import IndicatorReport, indicators

LOGGER = logging.getLogger(__name__)

_GRID_TOL = 1e-9

STUDY_HEADER = ("tau", "err_max", "err_l2", "slope")


class IntegrationError(RuntimeError):
    pass


class BlowUpError(IntegrationError):
    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class ThresholdCheck(BaseModel):
    model_config = ConfigDict(frozen=True)

    intensity: float
    threshold: float
    satisfied: bool
    reason: str | None = None
    message: str


class IntegrationRun(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    scheme: str
    tau: float
    N: int
    final_state: np.ndarray
    trajectory: tuple[np.ndarray, ...] | None = None
    err_max: float | None = None
    err_l2: float | None = None
    stability_ok: bool | None = None


class ConvergenceRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    tau: float
    err_max: float | None = None
    err_l2: float | None = None
    blew_up: bool = False
    failed_step: int | None = None


class ConvergenceStudy(BaseModel):
    model_config = ConfigDict(frozen=True)

    scheme: str
    k: int
    rows: list[ConvergenceRow] = Field(default_factory=list)
    slope: float
    slope_l2: float
    unstable: bool
    threshold: ThresholdCheck

    @property
    def passed(self) -> bool:
        return not self.unstable and abs(self.slope - self.k) <= 0.2 * self.k


def stability_threshold_check(
    problem: ProblemSpec,
    scheme: SchemeTriad,
    report: IndicatorReport | None = None,
) -> ThresholdCheck:
    report = indicators(scheme) if report is None else report
    threshold = problem.mu0 / problem.varpi
    intensity = report.intensity
    if report.lambda_I <= 0:
        return ThresholdCheck(
            intensity=intensity,
            threshold=threshold,
            satisfied=False,
            reason="non-dissipative composite kernel",
            message=f"lambda_I {report.lambda_I:.4f} <= 0: non-dissipative composite kernel",
        )

    satisfied = intensity > threshold
    if satisfied:
        message = f"intensity {intensity:.4f} > threshold {threshold:.4f}: unconditionally stable"
    else:
        relation = "<" if intensity < threshold else "="
        message = (
            f"intensity {intensity:.4f} {relation} threshold {threshold:.4f}: "
            "not covered by the unconditional stability estimate"
        )
    return ThresholdCheck(
        intensity=intensity,
        threshold=threshold,
        satisfied=satisfied,
        message=message,
    )


def _step_count(T: float, tau: float) -> int:
    steps = int(round(T / tau))
    if steps < 1 or abs(steps * tau - T) > _GRID_TOL * max(T, 1.0):
        raise IntegrationError(f"T={T} is not an integer multiple of tau={tau}.")
    return steps


def _startup(problem: ProblemSpec, k: int, tau: float) -> list[np.ndarray]:
    if problem.exact is not None:
        return [np.asarray(problem.exact(j * tau), dtype=float) for j in range(k)]
    if k == 1 and problem.initial is not None:
        return [np.asarray(problem.initial, dtype=float)]
    raise IntegrationError(f"a {k}-step scheme needs an exact solution for its startup values.")


def _implicit_solver(problem: ProblemSpec, scheme: SchemeTriad, tau: float):
    shift = scheme.a[0] / tau
    weight = problem.varpi * scheme.b[0]
    if problem.is_diagonal:
        diagonal = shift + weight * problem.L
        if np.any(diagonal == 0):
            raise SingularMatrixError("implicit diagonal has a zero entry.")
        return lambda rhs: rhs / diagonal
    factorization = factorize(shift * np.eye(problem.dim) + weight * problem.L)
    return lambda rhs: lu_apply(factorization, rhs)


def step_run(
    problem: ProblemSpec,
    scheme: SchemeTriad,
    tau: float,
    *,
    store_trajectory: bool = False,
    check: ThresholdCheck | None = None,
) -> IntegrationRun:
    if tau <= 0:
        raise IntegrationError(f"tau must be positive, got {tau}.")
    k = scheme.k
    N = _step_count(problem.T, tau)
    if (k - 1) * tau >= problem.T:
        raise IntegrationError(f"startup of {k - 1} steps does not fit before T={problem.T}.")

    blowup = get_settings().blowup_threshold
    solve = _implicit_solver(problem, scheme, tau)
    a, b, c = scheme.a, scheme.b, scheme.c
    varpi = problem.varpi

    states = _startup(problem, k, tau)
    trajectory: list[np.ndarray] | None = list(states) if store_trajectory else None
    # newest first: u^{n-1}, ..., u^{n-k}
    history = deque(reversed(states), maxlen=k)
    applied_L = deque((problem.apply_L(u) for u in history), maxlen=k)
    explicit = deque(
        (problem.F((k - 1 - j) * tau, u) for j, u in enumerate(history)), maxlen=k
    )

    energy_sum = 0.0
    for n in range(k, N + 1):
        rhs = a[0] * history[0] / tau
        for j in range(1, k):
            rhs = rhs - a[j] * (history[j - 1] - history[j]) / tau
        for j in range(1, k + 1):
            rhs = rhs - varpi * b[j] * applied_L[j - 1]
        for j in range(k):
            rhs = rhs + c[j] * explicit[j]

        u = solve(rhs)
        if not np.all(np.isfinite(u)) or float(np.max(np.abs(u))) > blowup:
            raise BlowUpError(f"blow-up detected at step {n} for {scheme.label} tau={tau:g}", step=n)

        if problem.exact is not None:
            error = u - problem.exact(n * tau)
            energy_sum += problem.energy(error)

        history.appendleft(u)
        applied_L.appendleft(problem.apply_L(u))
        explicit.appendleft(problem.F(n * tau, u))
        if trajectory is not None:
            trajectory.append(u)

    final = history[0]
    err_max = err_l2 = None
    if problem.exact is not None:
        err_max = float(np.max(np.abs(final - problem.exact(N * tau))))
        err_l2 = float(np.sqrt(tau * max(energy_sum, 0.0)))

    LOGGER.debug("Run finished scheme=%s tau=%s steps=%s err_max=%s", scheme.label, tau, N, err_max)
    return IntegrationRun(
        scheme=scheme.label,
        tau=tau,
        N=N,
        final_state=final,
        trajectory=None if trajectory is None else tuple(trajectory),
        err_max=err_max,
        err_l2=err_l2,
        stability_ok=None if check is None else check.satisfied,
    )


def _study_row(problem: ProblemSpec, scheme: SchemeTriad, tau: float) -> ConvergenceRow:
    try:
        run = step_run(problem, scheme, tau)
    except BlowUpError as exc:
        LOGGER.warning("Convergence run blew up scheme=%s tau=%s step=%s", scheme.label, tau, exc.step)
        return ConvergenceRow(tau=tau, blew_up=True, failed_step=exc.step)
    return ConvergenceRow(tau=tau, err_max=run.err_max, err_l2=run.err_l2)


def _fit_slope(taus: list[float], errors: list[float | None]) -> float:
    points = [(t, e) for t, e in zip(taus, errors) if e is not None and e > 0]
    if len(points) < 2:
        return float("nan")
    x = np.log([t for t, _ in points])
    y = np.log([e for _, e in points])
    return float(np.polyfit(x, y, 1)[0])


def convergence_study(
    problem: ProblemSpec,
    scheme: SchemeTriad,
    tau_list: Sequence[float],
) -> ConvergenceStudy:
    if problem.exact is None:
        raise IntegrationError("convergence study needs a manufactured exact solution.")
    taus = [float(t) for t in tau_list]
    if len(taus) < 3:
        raise IntegrationError(f"convergence study needs at least 3 step sizes, got {len(taus)}.")
    if any(later >= earlier for earlier, later in zip(taus, taus[1:])):
        raise IntegrationError("step sizes must be strictly decreasing.")

    check = stability_threshold_check(problem, scheme)
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        rows = list(pool.map(lambda tau: _study_row(problem, scheme, tau), taus))

    slope = _fit_slope(taus, [row.err_max for row in rows])
    slope_l2 = _fit_slope(taus, [row.err_l2 for row in rows])
    unstable = any(row.blew_up for row in rows) or not np.isfinite(slope)
    LOGGER.info(
        "Convergence study scheme=%s slope=%.3f slope_l2=%.3f unstable=%s",
        scheme.label,
        slope,
        slope_l2,
        unstable,
    )
    return ConvergenceStudy(
        scheme=scheme.label,
        k=scheme.k,
        rows=rows,
        slope=slope,
        slope_l2=slope_l2,
        unstable=unstable,
        threshold=check,
    )


def _cell(value: Any) -> str:
    return "" if value is None else format(value, ".17g")


def write_study_csv(study: ConvergenceStudy, path: str | Path) -> Path:
    target = Path(path)
    with target.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(STUDY_HEADER)
        for row in study.rows:
            writer.writerow([_cell(row.tau), _cell(row.err_max), _cell(row.err_l2), _cell(study.slope)])
    return target
