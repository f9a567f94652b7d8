import json
import logging
from collections.abc import Mapping, Sequence
from fractions import Fraction
from functools import lru_cache
from math import factorial
from typing import Any, Literal

import sympy
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from iems.catalog import FAMILIES, default_param, get_family_options, zero_stability_threshold
from iems.config import get_settings
from iems.polyring import ZETA_MINUS_ONE, LogGenerator, Poly, log_series_expand, root_condition

LOGGER = logging.getLogger(__name__)

Family = Literal["WBDF", "MBDF", "GBDF", "NIMEX", "SIEMS", "BDF", "Custom"]

_INVARIANT_TOL = 1e-12
_ORDER_TOL = 1e-10
_TRUNCATION_TOL = 1e-8


class SchemeError(RuntimeError):
    pass


class SchemeValidationError(SchemeError):
    pass


class OrderConditionError(SchemeError):
    pass


class UnderdeterminedOrderError(OrderConditionError):
    def __init__(self, message: str, free_unknowns: list[str], pinned: dict[str, Fraction]):
        super().__init__(message)
        self.free_unknowns = free_unknowns
        self.free_parameters = len(free_unknowns)
        self.pinned = pinned


class SchemeTriad(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: int = Field(ge=1, le=8)
    a: tuple[float, ...]
    b: tuple[float, ...]
    c: tuple[float, ...]
    family: Family = "Custom"
    param: float | None = None
    warnings: tuple[str, ...] = ()

    @model_validator(mode="after")
    def _check_lengths(self) -> "SchemeTriad":
        if len(self.a) != self.k or len(self.c) != self.k or len(self.b) != self.k + 1:
            raise ValueError(
                f"triad lengths a={len(self.a)} b={len(self.b)} c={len(self.c)} "
                f"do not match k={self.k}"
            )
        return self

    @property
    def label(self) -> str:
        if self.param is None:
            return f"{self.family}{self.k}"
        return f"{self.family}{self.k}({self.param:g})"


class CharacteristicTriple(BaseModel):
    model_config = ConfigDict(frozen=True)

    rho_a: Poly
    rho_b: Poly
    rho_c: Poly


class TruncationReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    order: int
    coeff_u: float
    coeff_F: float


_ORDER_RANGES: dict[str, tuple[int, ...]] = {
    name: tuple(get_family_options(name)["orders"]) for name in FAMILIES
}


def exact_param(value: Any) -> Fraction:
    try:
        return Fraction(value)
    except (TypeError, ValueError) as exc:
        raise SchemeError(f"parameter {value!r} is not a real number.") from exc


def family_generator(family: str, k: int, param: Any = None) -> LogGenerator:
    family = family.upper()
    if family == "BDF":
        return LogGenerator(prefactor=Poly.monomial(k), label="BDF")
    p = exact_param(param)
    linear = Poly.of(1 - p, p)
    if family in {"WBDF", "GBDF"}:
        prefactor = linear * Poly.monomial(k - 1)
    elif family == "NIMEX":
        prefactor = linear**k
    elif family == "SIEMS":
        prefactor = Poly.monomial(1) * linear ** (k - 1)
    else:
        raise SchemeError(f"family {family} has no logarithmic generator.")
    return LogGenerator(prefactor=prefactor, label=family)


def _coeffs_descending(poly: Poly, top: int) -> list[Any]:
    return [poly.coeff(top - j) for j in range(top + 1)]


def _explicit_from_implicit(rho_b: Poly, k: int) -> list[Any]:
    b0 = rho_b.coeff(k)
    rho_c = rho_b - (ZETA_MINUS_ONE**k) * b0
    return _coeffs_descending(rho_c, k - 1)


def _mbdf_vectors(k: int, s: Fraction) -> tuple[list[Any], list[Any], list[Any]]:
    if s == 1:
        raise SchemeValidationError("MBDF parameter s must differ from 1.")
    zeta = Poly.monomial(1)
    rho_tilde_a = Poly()
    for j in range(1, k + 1):
        rho_tilde_a = rho_tilde_a + zeta ** (k - j) * ZETA_MINUS_ONE ** (j - 1) * Fraction(1, j)
    rho_b = Poly.monomial(k) + ZETA_MINUS_ONE**k * (1 / (s - 1))
    return (
        _coeffs_descending(rho_tilde_a, k - 1),
        _coeffs_descending(rho_b, k),
        _explicit_from_implicit(rho_b, k),
    )


def _gbdf_vectors(k: int, beta: Fraction) -> tuple[list[Any], list[Any], list[Any]]:
    t = beta
    if k == 3:
        a = [(3 * t**2 + 6 * t + 2) / 6, (-6 * t**2 - 6 * t + 5) / 6, (3 * t**2 - 1) / 6]
        b = [(t**2 + t) / 2, 1 - t**2, (t**2 - t) / 2, Fraction(0)]
        c = [(t**2 + 3 * t + 2) / 2, -2 * t - t**2, (t**2 + t) / 2]
    elif k == 4:
        a = [
            (2 * t**3 + 9 * t**2 + 11 * t + 3) / 12,
            (-6 * t**3 - 21 * t**2 - 9 * t + 13) / 12,
            (6 * t**3 + 15 * t**2 - 3 * t - 5) / 12,
            (-2 * t**3 - 3 * t**2 + t + 1) / 12,
        ]
        b = [
            (t**3 + 3 * t**2 + 2 * t) / 6,
            (-(t**3) - 2 * t**2 + t + 2) / 2,
            (t**3 + t**2 - 2 * t) / 2,
            (t - t**3) / 6,
            Fraction(0),
        ]
        c = [
            (t**3 + 6 * t**2 + 11 * t + 6) / 6,
            (-(t**3) - 5 * t**2 - 6 * t) / 2,
            (t**3 + 4 * t**2 + 3 * t) / 2,
            (-(t**3) - 3 * t**2 - 2 * t) / 6,
        ]
    elif k == 5:
        a = [
            (5 * t**4 + 40 * t**3 + 105 * t**2 + 100 * t + 24) / 120,
            (-10 * t**4 - 70 * t**3 - 135 * t**2 - 25 * t + 77) / 60,
            (15 * t**4 + 90 * t**3 + 120 * t**2 - 45 * t - 43) / 60,
            (-10 * t**4 - 50 * t**3 - 45 * t**2 + 25 * t + 17) / 60,
            (5 * t**4 + 20 * t**3 + 15 * t**2 - 10 * t - 6) / 120,
        ]
        b = [
            t * (t**3 + 6 * t**2 + 11 * t + 6) / 24,
            (-(t**4) - 5 * t**3 - 5 * t**2 + 5 * t + 6) / 6,
            t * (t**3 + 4 * t**2 + t - 6) / 4,
            t * (-(t**3) - 3 * t**2 + t + 3) / 6,
            t * (t**3 + 2 * t**2 - t - 2) / 24,
            Fraction(0),
        ]
        c = [
            (t**4 + 10 * t**3 + 35 * t**2 + 50 * t + 24) / 24,
            -t * (t**3 + 9 * t**2 + 26 * t + 24) / 6,
            t * (t**3 + 8 * t**2 + 19 * t + 12) / 4,
            -t * (t**3 + 7 * t**2 + 14 * t + 8) / 6,
            t * (t**3 + 6 * t**2 + 11 * t + 6) / 24,
        ]
    else:
        raise SchemeError(f"GBDF{k} has no explicit coefficient table.")
    return a, b, c


def _log_family_vectors(family: str, k: int, param: Any) -> tuple[list[Any], list[Any], list[Any]]:
    generator = family_generator(family, k, param)
    rho_tilde_a = log_series_expand(generator, k)
    rho_b = generator.prefactor
    return (
        _coeffs_descending(rho_tilde_a, k - 1),
        _coeffs_descending(rho_b, k),
        _explicit_from_implicit(rho_b, k),
    )


def _build_vectors(family: str, k: int, param: Fraction | None) -> tuple[list[Any], list[Any], list[Any]]:
    if family == "MBDF":
        return _mbdf_vectors(k, param)
    if family == "GBDF" and k >= 3:
        return _gbdf_vectors(k, param)
    return _log_family_vectors(family, k, param)


@lru_cache(maxsize=256)
def _family_vectors(family: str, k: int, param: float | None) -> tuple[tuple[Fraction, ...], ...]:
    vectors = _build_vectors(family, k, None if param is None else Fraction(param))
    return tuple(tuple(Fraction(x) for x in vector) for vector in vectors)


def exact_coefficients(scheme: SchemeTriad) -> tuple[tuple[Fraction, ...], ...]:
    """Exact (a, b, c) of a scheme.

    Family schemes are rebuilt from the binary value of their parameter, so the triad
    identities hold exactly; anything else uses the binary values of its stored coefficients.
    """
    stored = (scheme.a, scheme.b, scheme.c)
    if scheme.family != "Custom":
        rebuilt = _family_vectors(scheme.family, scheme.k, scheme.param)
        if all(
            abs(float(x) - y) <= 1e-12 * max(1.0, abs(y))
            for exact, floats in zip(rebuilt, stored)
            for x, y in zip(exact, floats, strict=True)
        ):
            return rebuilt
        LOGGER.debug("stored coefficients differ from family rebuild scheme=%s", scheme.label)
    return tuple(tuple(_exact(vector)) for vector in stored)


def _zero_stability_warnings(scheme: SchemeTriad) -> list[str]:
    warnings: list[str] = []
    threshold = zero_stability_threshold(scheme.family, scheme.k)
    if threshold is not None and scheme.param is not None and scheme.param <= threshold:
        warnings.append(
            f"parameter {scheme.param:g} is not above the zero-stability threshold {threshold:.6g}"
        )
    triple = characteristic_triple(scheme)
    for name, poly in (("rho_a", triple.rho_a), ("rho_b", triple.rho_b), ("rho_c", triple.rho_c)):
        if poly.degree >= 1 and not root_condition(poly):
            warnings.append(f"{name} violates the root condition")
    return warnings


def make_scheme(family: str, k: int, param: Any = None) -> SchemeTriad:
    family = family.upper()
    if family not in _ORDER_RANGES or k not in _ORDER_RANGES[family]:
        raise SchemeError(f"unsupported order: {family} k={k}")

    exact: Fraction | None = None
    if family != "BDF":
        if param is None:
            param = default_param(family, k)
        exact = exact_param(param)

    a, b, c = _build_vectors(family, k, exact)
    scheme = SchemeTriad(
        k=k,
        a=tuple(float(x) for x in a),
        b=tuple(float(x) for x in b),
        c=tuple(float(x) for x in c),
        family=family,
        param=None if exact is None else float(exact),
    )
    validate_triad(scheme)

    warnings = _zero_stability_warnings(scheme)
    if warnings:
        if get_settings().strict_params:
            raise SchemeValidationError(f"{scheme.label}: " + "; ".join(warnings))
        LOGGER.warning("scheme outside zero-stability range scheme=%s warnings=%s", scheme.label, warnings)
        scheme = scheme.model_copy(update={"warnings": tuple(warnings)})

    LOGGER.debug("scheme built family=%s k=%s param=%s", family, k, scheme.param)
    return scheme


def validate_triad(scheme: SchemeTriad) -> None:
    if min(scheme.a[0], scheme.b[0], scheme.c[0]) <= 0:
        raise SchemeValidationError(f"{scheme.label}: leading coefficients must be positive.")

    scale = max(1.0, *(abs(x) for x in scheme.a + scheme.b + scheme.c))
    for name, vector in (("a", scheme.a), ("b", scheme.b), ("c", scheme.c)):
        if abs(sum(vector) - 1.0) > _INVARIANT_TOL * scale:
            raise SchemeValidationError(f"{scheme.label}: sum of {name} is {sum(vector)!r}, expected 1.")

    triple = characteristic_triple(scheme)
    gap = triple.rho_b - ZETA_MINUS_ONE**scheme.k * scheme.b[0] - triple.rho_c
    if any(abs(x) > _INVARIANT_TOL * scale for x in gap.coeffs):
        raise SchemeValidationError(f"{scheme.label}: explicit part is not rho_b - b0 (z-1)^k.")

    worst = max_order_residual(scheme, scheme.k)
    if worst > _ORDER_TOL:
        raise SchemeValidationError(f"{scheme.label}: order residual {worst:.3e} exceeds {_ORDER_TOL:.0e}.")


def _exact(values: Sequence[float]) -> list[Fraction]:
    return [Fraction(x) for x in values]


def _relative(terms: list[Fraction]) -> float:
    return float(abs(sum(terms)) / max(1, max(abs(x) for x in terms)))


def order_residuals(scheme: SchemeTriad, q: int, shift: float = 0.0) -> list[tuple[float, float]]:
    """Per-order residuals of the implicit and explicit condition chains, scaled by term size.

    Sums are taken exactly over the binary values of the coefficients, so high powers of the
    node offsets do not cancel in floating point.
    """
    a, b, c = _exact(scheme.a), _exact(scheme.b), _exact(scheme.c)
    s = Fraction(shift)
    residuals: list[tuple[float, float]] = []
    for ell in range(1, q + 1):
        implicit_terms = [aj * ((s - j) ** ell - (s - j - 1) ** ell) for j, aj in enumerate(a)] + [
            -ell * bj * (s - j) ** (ell - 1) for j, bj in enumerate(b)
        ]
        explicit_terms = [bj * (s - j) ** (ell - 1) for j, bj in enumerate(b)] + [
            -cj * (s - j - 1) ** (ell - 1) for j, cj in enumerate(c)
        ]
        residuals.append((_relative(implicit_terms), _relative(explicit_terms)))
    return residuals


def max_order_residual(scheme: SchemeTriad, q: int, shift: float = 0.0) -> float:
    consistency = _relative(_exact(scheme.a) + [Fraction(-1)])
    return max([consistency] + [max(pair) for pair in order_residuals(scheme, q, shift)])


def characteristic_triple(scheme: SchemeTriad) -> CharacteristicTriple:
    rho_tilde_a = Poly(coeffs=scheme.a[::-1])
    return CharacteristicTriple(
        rho_a=ZETA_MINUS_ONE * rho_tilde_a,
        rho_b=Poly(coeffs=scheme.b[::-1]),
        rho_c=Poly(coeffs=scheme.c[::-1]),
    )


def truncation_leading(scheme: SchemeTriad) -> TruncationReport:
    q = scheme.k
    if max_order_residual(scheme, q) > _TRUNCATION_TOL:
        raise SchemeError(f"inconsistent scheme: {scheme.label} fails order {q} conditions")

    a, b, c = _exact(scheme.a), _exact(scheme.b), _exact(scheme.c)
    implicit = sum(aj * ((-j) ** (q + 1) - (-j - 1) ** (q + 1)) for j, aj in enumerate(a))
    implicit -= (q + 1) * sum(bj * (-j) ** q for j, bj in enumerate(b))
    explicit = sum(bj * (-j) ** q for j, bj in enumerate(b))
    explicit -= sum(cj * (-j - 1) ** q for j, cj in enumerate(c))
    return TruncationReport(
        order=q,
        coeff_u=float(implicit / factorial(q + 1)),
        coeff_F=float(explicit / factorial(q)),
    )


def _unknown_names(k: int) -> list[str]:
    return [f"a{j}" for j in range(k)] + [f"b{j}" for j in range(k + 1)] + [f"c{j}" for j in range(k)]


def _rational(value: Any) -> sympy.Rational:
    exact = Fraction(value)
    if isinstance(value, float):
        exact = exact.limit_denominator(10**12)
    return sympy.Rational(exact.numerator, exact.denominator)


def _normalize_fixed(k: int, fixed_b: Mapping[int, Any] | Sequence[Any] | None) -> dict[int, Any]:
    if fixed_b is None:
        return {}
    items = fixed_b.items() if isinstance(fixed_b, Mapping) else enumerate(fixed_b)
    fixed = {int(j): value for j, value in items if value is not None}
    for j in fixed:
        if not 0 <= j <= k:
            raise OrderConditionError(f"fixed b index {j} outside 0..{k}.")
    return fixed


def _order_rows(k: int, q: int, *, implicit: bool = True) -> list[list[sympy.Rational]]:
    n_unknowns = 3 * k + 1
    rows: list[list[sympy.Rational]] = []
    if implicit:
        row = [sympy.Integer(0)] * (n_unknowns + 1)
        for j in range(k):
            row[j] = sympy.Integer(1)
        row[-1] = sympy.Integer(1)
        rows.append(row)
    for ell in range(1, q + 1):
        if implicit:
            row = [sympy.Integer(0)] * (n_unknowns + 1)
            for j in range(k):
                row[j] = sympy.Integer((-j) ** ell - (-j - 1) ** ell)
            for j in range(k + 1):
                row[k + j] = sympy.Integer(-ell * (-j) ** (ell - 1))
            rows.append(row)
        row = [sympy.Integer(0)] * (n_unknowns + 1)
        for j in range(k + 1):
            row[k + j] = sympy.Integer((-j) ** (ell - 1))
        for j in range(k):
            row[2 * k + 1 + j] = sympy.Integer(-((-j - 1) ** (ell - 1)))
        rows.append(row)
    return rows


def _reduce(k: int, rows: list[list[sympy.Rational]]) -> tuple[sympy.Matrix, tuple[int, ...]]:
    n_unknowns = 3 * k + 1
    reduced, pivots = sympy.Matrix(rows).rref()
    if n_unknowns in pivots:
        raise OrderConditionError(f"order conditions are inconsistent for k={k}.")
    return reduced, pivots


def _pinned_values(
    k: int, reduced: sympy.Matrix, pivots: tuple[int, ...], free_cols: list[int]
) -> dict[str, Fraction]:
    names = _unknown_names(k)
    pinned: dict[str, Fraction] = {}
    for row_index, col in enumerate(pivots):
        if all(reduced[row_index, free] == 0 for free in free_cols):
            value = sympy.Rational(reduced[row_index, -1])
            pinned[names[col]] = Fraction(int(value.p), int(value.q))
    return pinned


def solve_order_conditions(
    k: int,
    q: int,
    fixed_b: Mapping[int, Any] | Sequence[Any] | None = None,
) -> SchemeTriad:
    if k < 1 or q < 1:
        raise OrderConditionError(f"need k >= 1 and q >= 1, got k={k} q={q}.")

    n_unknowns = 3 * k + 1
    rows = _order_rows(k, q)
    for j, value in _normalize_fixed(k, fixed_b).items():
        row = [sympy.Integer(0)] * (n_unknowns + 1)
        row[k + j] = sympy.Integer(1)
        row[-1] = _rational(value)
        rows.append(row)

    reduced, pivots = _reduce(k, rows)
    free_cols = [col for col in range(n_unknowns) if col not in pivots]
    if free_cols:
        names = _unknown_names(k)
        free = [names[col] for col in free_cols]
        raise UnderdeterminedOrderError(
            f"order conditions leave {len(free)} free parameters: {', '.join(free)}",
            free_unknowns=free,
            pinned=_pinned_values(k, reduced, pivots, free_cols),
        )

    solution = [reduced[row_index, -1] for row_index in range(len(pivots))]
    values = [float(x) for x in solution]
    LOGGER.debug("order conditions solved k=%s q=%s", k, q)
    return SchemeTriad(
        k=k,
        a=tuple(values[:k]),
        b=tuple(values[k : 2 * k + 1]),
        c=tuple(values[2 * k + 1 :]),
        family="Custom",
    )


def forced_implicit_weight(k: int, q: int) -> Fraction:
    """Value of b0 pinned by the implicit/explicit coupling conditions up to order q."""
    rows = _order_rows(k, q, implicit=False)
    reduced, pivots = _reduce(k, rows)
    free_cols = [col for col in range(3 * k + 1) if col not in pivots]
    pinned = _pinned_values(k, reduced, pivots, free_cols)
    if "b0" not in pinned:
        raise OrderConditionError(f"b0 is not determined by the coupling conditions at k={k} q={q}.")
    return pinned["b0"]


def _format(value: float) -> str:
    return format(value, ".17g")


def scheme_to_json(scheme: SchemeTriad) -> dict[str, Any]:
    return {
        "family": scheme.family,
        "k": scheme.k,
        "param": None if scheme.param is None else _format(scheme.param),
        "a": [_format(x) for x in scheme.a],
        "b": [_format(x) for x in scheme.b],
        "c": [_format(x) for x in scheme.c],
    }


def scheme_from_json(payload: str | Mapping[str, Any]) -> SchemeTriad:
    try:
        data = json.loads(payload) if isinstance(payload, str) else dict(payload)
    except json.JSONDecodeError as exc:
        raise SchemeError(f"scheme JSON is malformed at line {exc.lineno} column {exc.colno}.") from exc
    try:
        return SchemeTriad(
            k=data["k"],
            a=tuple(float(x) for x in data["a"]),
            b=tuple(float(x) for x in data["b"]),
            c=tuple(float(x) for x in data["c"]),
            family=data.get("family", "Custom"),
            param=None if data.get("param") is None else float(data["param"]),
        )
    except (KeyError, TypeError, ValueError, ValidationError) as exc:
        raise SchemeError(f"scheme JSON is invalid: {exc}") from exc
