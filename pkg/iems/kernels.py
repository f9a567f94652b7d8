import csv
import logging
import math
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict

from iems.config import get_settings
from iems.numcore import NumcoreError, spectral_norm, sym_eig
from iems.schemes import SchemeTriad
from iems.symbolcalc import IndicatorReport, indicators, max_re_b_over_a, symbol_of

LOGGER = logging.getLogger(__name__)

_INVERSE_TOL = 1e-10
_BOUND_SLACK = 1e-8

SPECTRUM_HEADER = ("index", "eigenvalue", "symbol_sample")


class KernelError(RuntimeError):
    pass


class DocKernelSequence(BaseModel):
    model_config = ConfigDict(frozen=True)

    base: tuple[float, ...]
    doc: tuple[float, ...]
    n: int


class CompositeKernels(BaseModel):
    model_config = ConfigDict(frozen=True)

    b_hat: tuple[float, ...]
    c_hat: tuple[float, ...]
    n: int


class ToeplitzReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    scheme: str
    n: int
    min_eig_sym_Bhat: float
    max_eig_sym_Bhat: float
    specnorm_Ainv: float
    specnorm_AinvC: float
    equal_distribution_gap: float
    trace_gap: float
    inverse_discrepancy: float
    orthogonality_residual: float
    lambda_I: float
    sigma_F: float
    sigma_E: float
    lower_bound_ok: bool
    upper_bound_ok: bool
    ainv_bound_ok: bool
    ainvc_bound_ok: bool
    power_converged: bool
    spectrum: tuple[float, ...] | None = None
    symbol_samples: tuple[float, ...] | None = None

    @property
    def bounds_ok(self) -> bool:
        return self.lower_bound_ok and self.upper_bound_ok and self.ainv_bound_ok and self.ainvc_bound_ok


def doc_kernels(a: Sequence[float], n: int) -> DocKernelSequence:
    base = np.asarray(a, dtype=float)
    if base.size == 0 or base[0] <= 0:
        raise KernelError("DOC kernels need a positive leading coefficient a0.")
    if n < 1:
        raise KernelError(f"kernel length must be positive, got n={n}.")

    doc = np.zeros(n)
    doc[0] = 1.0 / base[0]
    tail = base[1:]
    for j in range(1, n):
        width = min(j, tail.size)
        # doc[j-1], ..., doc[j-width] against a1, ..., a_width
        doc[j] = -math.fsum(doc[j - width : j][::-1] * tail[:width]) / base[0]
    return DocKernelSequence(base=tuple(base.tolist()), doc=tuple(doc.tolist()), n=n)


def orthogonality_residual(sequence: DocKernelSequence) -> float:
    """Largest entry of doc * a - delta, relative to the size of the products in that entry."""
    doc, base = sequence.doc, sequence.base
    worst = 0.0
    for i in range(sequence.n):
        terms = [doc[i - j] * base[j] for j in range(min(i + 1, len(base)))]
        value = math.fsum(terms + [-1.0] if i == 0 else terms)
        scale = max(1.0, math.fsum(abs(x) for x in terms))
        worst = max(worst, abs(value) / scale)
    return worst


def composite_kernels(scheme: SchemeTriad, n: int) -> CompositeKernels:
    doc = np.asarray(doc_kernels(scheme.a, n).doc)
    return CompositeKernels(
        b_hat=tuple(np.convolve(doc, scheme.b)[:n].tolist()),
        c_hat=tuple(np.convolve(doc, scheme.c)[:n].tolist()),
        n=n,
    )


def lower_toeplitz(sequence: Sequence[float], n: int) -> np.ndarray:
    column = np.zeros(n)
    values = np.asarray(sequence, dtype=float)[:n]
    column[: values.size] = values
    return scipy.linalg.toeplitz(column, np.zeros(n))


def symbol_samples(scheme: SchemeTriad, n: int) -> np.ndarray:
    theta = 2.0 * np.pi * np.arange(n) / n
    return np.real(symbol_of(scheme, "b")(theta) / symbol_of(scheme, "a")(theta))


def toeplitz_verify(
    scheme: SchemeTriad,
    n: int,
    report: IndicatorReport | None = None,
    *,
    max_n: int | None = None,
    with_spectrum: bool = False,
) -> ToeplitzReport:
    max_n = get_settings().toeplitz_max_n if max_n is None else max_n
    if n < scheme.k + 1:
        raise KernelError(f"Toeplitz size n={n} must be at least k+1={scheme.k + 1}.")
    if n > max_n:
        raise KernelError(f"Toeplitz size n={n} exceeds configured maximum {max_n}.")
    report = indicators(scheme) if report is None else report

    A = lower_toeplitz(scheme.a, n)
    B = lower_toeplitz(scheme.b, n)
    C = lower_toeplitz(scheme.c, n)
    sequence = doc_kernels(scheme.a, n)
    A_inv = lower_toeplitz(sequence.doc, n)
    direct = scipy.linalg.solve_triangular(A, np.eye(n), lower=True)
    discrepancy = float(np.max(np.abs(A_inv - direct)))
    if discrepancy > _INVERSE_TOL * max(1.0, float(np.max(np.abs(direct)))):
        raise KernelError(
            f"DOC inverse disagrees with triangular solve for {scheme.label}: {discrepancy:.3e}"
        )

    B_hat = A_inv @ B
    try:
        eigenvalues = sym_eig(0.5 * (B_hat + B_hat.T))
    except NumcoreError as exc:
        raise KernelError(f"eigensolver failed for {scheme.label} n={n}: {exc}") from exc
    norm_inv = spectral_norm(A_inv)
    norm_inv_c = spectral_norm(A_inv @ C)

    samples = np.sort(symbol_samples(scheme, n))
    ordered = np.sort(eigenvalues)
    min_eig = float(ordered[0])
    max_eig = float(ordered[-1])

    result = ToeplitzReport(
        scheme=scheme.label,
        n=n,
        min_eig_sym_Bhat=min_eig,
        max_eig_sym_Bhat=max_eig,
        specnorm_Ainv=norm_inv.value,
        specnorm_AinvC=norm_inv_c.value,
        equal_distribution_gap=float(np.mean(np.abs(ordered - samples))),
        trace_gap=float(abs(np.sum(ordered) - np.sum(samples)) / n),
        inverse_discrepancy=discrepancy,
        orthogonality_residual=orthogonality_residual(sequence),
        lambda_I=report.lambda_I,
        sigma_F=report.sigma_F,
        sigma_E=report.sigma_E,
        lower_bound_ok=min_eig >= report.lambda_I - _BOUND_SLACK,
        upper_bound_ok=max_eig <= max_re_b_over_a(scheme) + _BOUND_SLACK,
        ainv_bound_ok=norm_inv.value <= report.sigma_F + _BOUND_SLACK,
        ainvc_bound_ok=norm_inv_c.value <= report.sigma_E + _BOUND_SLACK,
        power_converged=norm_inv.converged and norm_inv_c.converged,
        spectrum=tuple(ordered.tolist()) if with_spectrum else None,
        symbol_samples=tuple(samples.tolist()) if with_spectrum else None,
    )
    if not result.bounds_ok:
        LOGGER.warning(
            "Toeplitz bounds violated scheme=%s n=%s min_eig=%s lambda_I=%s norm_inv=%s norm_inv_c=%s",
            scheme.label,
            n,
            min_eig,
            report.lambda_I,
            norm_inv.value,
            norm_inv_c.value,
        )
    return result


def write_spectrum_csv(report: ToeplitzReport, path: str | Path) -> Path:
    if report.spectrum is None or report.symbol_samples is None:
        raise KernelError("report carries no spectrum; rerun with with_spectrum=True.")
    target = Path(path)
    with target.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(SPECTRUM_HEADER)
        for index, (eigenvalue, sample) in enumerate(zip(report.spectrum, report.symbol_samples)):
            writer.writerow([index, format(eigenvalue, ".17g"), format(sample, ".17g")])
    return target


def report_to_json(report: ToeplitzReport) -> dict[str, Any]:
    payload = report.model_dump(exclude={"spectrum", "symbol_samples"})
    payload["bounds_ok"] = report.bounds_ok
    return payload
