import logging
from fractions import Fraction
from typing import Any

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field, field_validator

from iems.config import get_settings
from iems.numcore import NumcoreError, complex_eig

LOGGER = logging.getLogger(__name__)

Scalar = Fraction | float | int


class PolyringError(RuntimeError):
    pass


class Poly(BaseModel):
    """Polynomial with ascending coefficients; exact when built from Fractions."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    coeffs: tuple[Any, ...] = ()

    @field_validator("coeffs", mode="before")
    @classmethod
    def _strip_trailing_zeros(cls, value: Any) -> tuple[Any, ...]:
        items = list(value)
        while items and items[-1] == 0:
            items.pop()
        return tuple(items)

    @classmethod
    def of(cls, *coeffs: Scalar) -> "Poly":
        return cls(coeffs=coeffs)

    @classmethod
    def monomial(cls, degree: int, coeff: Scalar = 1) -> "Poly":
        return cls(coeffs=(0,) * degree + (coeff,))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    def coeff(self, index: int) -> Scalar:
        return self.coeffs[index] if 0 <= index < len(self.coeffs) else 0

    def __add__(self, other: "Poly | Scalar") -> "Poly":
        other = _as_poly(other)
        size = max(len(self.coeffs), len(other.coeffs))
        return Poly(coeffs=[self.coeff(i) + other.coeff(i) for i in range(size)])

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly(coeffs=[-c for c in self.coeffs])

    def __sub__(self, other: "Poly | Scalar") -> "Poly":
        return self + (-_as_poly(other))

    def __rsub__(self, other: Scalar) -> "Poly":
        return _as_poly(other) - self

    def __mul__(self, other: "Poly | Scalar") -> "Poly":
        other = _as_poly(other)
        if self.is_zero or other.is_zero:
            return Poly()
        product: list[Any] = [0] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, left in enumerate(self.coeffs):
            for j, right in enumerate(other.coeffs):
                product[i + j] += left * right
        return Poly(coeffs=product)

    __rmul__ = __mul__

    def __pow__(self, exponent: int) -> "Poly":
        if exponent < 0:
            raise PolyringError("negative polynomial power.")
        result = Poly.of(1)
        for _ in range(exponent):
            result = result * self
        return result

    def __call__(self, x: Any) -> Any:
        value: Any = 0
        for c in reversed(self.coeffs):
            value = value * x + c
        return value

    def compose(self, inner: "Poly") -> "Poly":
        result = Poly()
        for c in reversed(self.coeffs):
            result = result * inner + c
        return result

    def truncate(self, degree: int) -> "Poly":
        return Poly(coeffs=self.coeffs[: degree + 1])

    def to_float(self) -> np.ndarray:
        return np.array([float(c) for c in self.coeffs], dtype=float)


def _as_poly(value: "Poly | Scalar") -> Poly:
    return value if isinstance(value, Poly) else Poly.of(value)


ZETA_MINUS_ONE = Poly.of(-1, 1)


class RootReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    roots: tuple[Any, ...] = ()
    on_circle: tuple[bool, ...] = ()
    simple_on_circle: bool = True
    max_modulus: float = 0.0


class LogGenerator(BaseModel):
    """Generator f(z) = prefactor(z) * ln z of a multistep family."""

    model_config = ConfigDict(frozen=True)

    prefactor: Poly
    label: str = Field(default="custom", min_length=1)


def poly_roots(
    p: Poly,
    *,
    circle_tol: float | None = None,
    pairing_tol: float | None = None,
) -> RootReport:
    if p.is_zero:
        raise PolyringError("zero polynomial")
    if p.degree == 0:
        return RootReport()

    settings = get_settings()
    circle_tol = settings.circle_tol if circle_tol is None else circle_tol
    pairing_tol = settings.pairing_tol if pairing_tol is None else pairing_tol

    descending = p.to_float()[::-1]
    try:
        roots = complex_eig(scipy.linalg.companion(descending))
    except (NumcoreError, ValueError) as exc:
        raise PolyringError(f"root finding failed for degree {p.degree}: {exc}") from exc

    moduli = np.abs(roots)
    on_circle = tuple(bool(abs(m - 1.0) <= circle_tol) for m in moduli)
    circle_roots = [r for r, flag in zip(roots, on_circle) if flag]
    simple = all(
        abs(circle_roots[i] - circle_roots[j]) > pairing_tol
        for i in range(len(circle_roots))
        for j in range(i + 1, len(circle_roots))
    )
    return RootReport(
        roots=tuple(complex(r) for r in roots),
        on_circle=on_circle,
        simple_on_circle=simple,
        max_modulus=float(np.max(moduli)),
    )


def root_condition(p: Poly, *, circle_tol: float | None = None) -> bool:
    tol = get_settings().circle_tol if circle_tol is None else circle_tol
    report = poly_roots(p, circle_tol=tol)
    return report.max_modulus <= 1.0 + tol and report.simple_on_circle


def log_series(order: int) -> Poly:
    # ln(1 + w) truncated at w**order
    return Poly(coeffs=[0] + [Fraction((-1) ** (m + 1), m) for m in range(1, order + 1)])


def log_taylor_coefficients(generator: LogGenerator, order: int) -> list[Any]:
    """Coefficients t_j of f(1 + w) = sum_j t_j w**j for j = 0..order."""
    shifted = generator.prefactor.compose(Poly.of(1, 1))
    series = (shifted * log_series(order)).truncate(order)
    return [series.coeff(j) for j in range(order + 1)]


def log_series_expand(generator: LogGenerator, k: int) -> Poly:
    if k <= 0:
        raise PolyringError(f"step count must be positive, got k={k}.")
    taylor = log_taylor_coefficients(generator, k)
    result = Poly()
    for j in range(k, 0, -1):
        result = result * ZETA_MINUS_ONE + taylor[j]
    LOGGER.debug("log-series expansion generator=%s k=%s", generator.label, k)
    return result
