import csv
import logging
from collections.abc import Callable, Iterable, Sequence
from math import inf, sqrt
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict

from iems.catalog import default_grid, get_family_options
from iems.schemes import make_scheme
from iems.symbolcalc import IndicatorReport, indicator_sweep, indicators

LOGGER = logging.getLogger(__name__)

Quantity = Literal["sigma_F", "sigma_E", "lambda_I", "intensity"]
Relation = Literal["eq", "upper", "lower"]

QUANTITIES: tuple[Quantity, ...] = ("sigma_F", "sigma_E", "lambda_I", "intensity")
TABLE_SLACK = 1e-9
TABLE_HEADER = (
    "family",
    "k",
    "param",
    "quantity",
    "computed",
    "formula",
    "relation",
    "discrepancy",
    "pass",
)


class TableError(RuntimeError):
    pass


class ClosedForm(BaseModel):
    model_config = ConfigDict(frozen=True)

    quantity: Quantity
    relation: Relation
    formula: Callable[[float], float]
    lo: float = -inf
    hi: float = inf
    lo_open: bool = False
    hi_open: bool = False

    def applies(self, x: float) -> bool:
        if x < self.lo or (self.lo_open and x == self.lo):
            return False
        return x < self.hi if self.hi_open else x <= self.hi


class TableRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: str
    k: int
    param: float | None
    quantity: Quantity
    computed: float
    formula: float | None = None
    relation: Relation | None = None
    discrepancy: float | None = None
    passed: bool | None = None


def _forms(
    lo: float, hi: float = inf, *, lo_open: bool = False, hi_open: bool = False, **entries: Any
) -> list[ClosedForm]:
    forms = []
    for key, (relation, formula) in entries.items():
        forms.append(
            ClosedForm(quantity=key, relation=relation, formula=formula, lo=lo,
                hi=hi,
                lo_open=lo_open,
                hi_open=hi_open,
            )
        )
    return forms


def _one(_: float) -> float:
    return 1.0


def _nimex2_lambda(d: float) -> float:
    root = 4 * sqrt(2) * sqrt((2 * d - 1) ** 3 * (4 * d**2 - 5 * d + 1) ** 2)
    return (root + 192 * d**4 - 416 * d**3 + 316 * d**2 - 100 * d + 11) / (16 * d**2 - 16 * d + 3) ** 2


def _mbdf2_lambda(s: float) -> float:
    return (s + 4 * sqrt(2 * s + 6) - 13) / (3 * (s - 1))


def _gbdf5_denominator(b: float) -> float:
    return 10 * b**4 + 60 * b**3 + 90 * b**2 - 32


def _siems_forms(lam: Callable[[float], float], intensity: Callable[[float], float], lo: float, hi: float = inf) -> list[ClosedForm]:
    return _forms(
        lo,
        hi,
        sigma_F=("eq", _one),
        sigma_E=("eq", lambda g: lam(g) / intensity(g)),
        lambda_I=("eq", lam),
        intensity=("eq", intensity),
    )


_CLOSED_FORMS: dict[tuple[str, int], list[ClosedForm]] = {
    ("BDF", 1): _forms(
        -inf,
        sigma_F=("eq", _one),
        sigma_E=("eq", _one),
        lambda_I=("eq", _one),
        intensity=("eq", _one),
    ),
    ("WBDF", 2): _forms(
        1,
        sigma_F=("eq", _one),
        sigma_E=("eq", lambda a: (2 * a + 1) / (2 * a)),
        lambda_I=("eq", lambda a: (2 * a - 1) / (2 * a)),
        intensity=("eq", lambda a: (2 * a - 1) / (2 * a + 1)),
    ),
    ("WBDF", 3): _forms(
        1,
        sigma_F=("eq", _one),
        sigma_E=("eq", lambda a: 3 * (6 * a + 1) / (2 * (6 * a - 1))),
        lambda_I=("eq", lambda a: 3 * (2 * a - 1) / (2 * (6 * a - 1))),
        intensity=("eq", lambda a: (2 * a - 1) / (6 * a + 1)),
    ),
    ("WBDF", 4): _forms(
        1.2,
        sigma_F=("eq", _one),
        sigma_E=("eq", lambda a: 3 * (14 * a + 1) / (4 * (5 * a - 1))),
        lambda_I=("eq", lambda a: 3 * (2 * a - 1) / (4 * (5 * a - 1))),
        intensity=("eq", lambda a: (2 * a - 1) / (14 * a + 1)),
    ),
    ("WBDF", 5): _forms(
        1,
        sigma_F=("upper", lambda a: (24 * a - 1) / (20 * a)),
        sigma_E=("upper", lambda a: 15 * (15 * a + 2) / (16 * (5 * a - 1))),
        lambda_I=("lower", lambda a: (15 * a - 13) / (16 * (5 * a - 1))),
        intensity=("lower", lambda a: (15 * a - 13) / (15 * (15 * a + 2))),
    )
    + _forms(
        1,
        sigma_F=("lower", _one),
        sigma_E=("lower", lambda a: 15 * (30 * a + 1) / (32 * (5 * a - 1))),
        lambda_I=("upper", lambda a: 15 * (2 * a - 1) / (32 * (5 * a - 1))),
        intensity=("upper", lambda a: (2 * a - 1) / (30 * a + 1)),
    ),
    ("MBDF", 2): _forms(
        1,
        lo_open=True,
        sigma_F=("eq", _one),
        sigma_E=("eq", lambda s: 1.5),
        lambda_I=("eq", _mbdf2_lambda),
        intensity=("eq", lambda s: _mbdf2_lambda(s) / 1.5),
    ),
    ("MBDF", 3): _forms(
        2,
        lo_open=True,
        sigma_F=("eq", _one),
        sigma_E=("eq", lambda s: 2.1),
        lambda_I=("upper", lambda s: 0.4),
        intensity=("upper", lambda s: 4 / 21),
    ),
    ("GBDF", 2): _forms(
        1,
        sigma_F=("eq", _one),
        sigma_E=("eq", lambda b: (2 * b + 1) / (2 * b)),
        lambda_I=("eq", lambda b: (2 * b - 1) / (2 * b)),
        intensity=("eq", lambda b: (2 * b - 1) / (2 * b + 1)),
    ),
    ("GBDF", 3): _forms(
        1,
        sigma_F=("eq", _one),
        sigma_E=("eq", lambda b: (6 * b**2 + 12 * b + 3) / (6 * b**2 + 6 * b - 2)),
        lambda_I=("lower", lambda b: (6 * b**2 - 4) / (6 * b**2 + 6 * b - 2)),
        intensity=("lower", lambda b: (6 * b**2 - 4) / (6 * b**2 + 12 * b + 3)),
    )
    + _forms(
        1,
        lambda_I=("upper", lambda b: (6 * b**2 - 3) / (6 * b**2 + 6 * b - 2)),
        intensity=("upper", lambda b: (6 * b**2 - 3) / (6 * b**2 + 12 * b + 3)),
    ),
    ("GBDF", 4): _forms(
        1,
        sigma_F=("upper", lambda b: (11 * b - 1) / (10 * b)),
        sigma_E=("upper", lambda b: (4 * b**3 + 19 * b**2 + 20 * b + 3) / (4 * (b**3 + 3 * b**2 + b - 1))),
        lambda_I=("lower", lambda b: (4 * b**3 + 5 * b**2 - 4 * b - 3) / (4 * (b**3 + 3 * b**2 + b - 1))),
        intensity=(
            "lower",
            lambda b: (4 * b**3 + 5 * b**2 - 4 * b - 3) / (4 * b**3 + 19 * b**2 + 20 * b + 3),
        ),
    ),
    ("GBDF", 5): _forms(
        1,
        18,
        hi_open=True,
        sigma_F=("upper", lambda b: (20 * b - 1) / (10 * b)),
        sigma_E=(
            "upper",
            lambda b: 5 * (2 * b**4 + 30 * b**3 + 32 * b**2 + 38 * b + 5) / _gbdf5_denominator(b),
        ),
        lambda_I=(
            "lower",
            lambda b: 5 * (2 * b**4 + b**3 + 4 * b**2 - 4 * b - 2) / _gbdf5_denominator(b),
        ),
        intensity=(
            "lower",
            lambda b: (2 * b**4 + b**3 + 4 * b**2 - 4 * b - 2)
            / (2 * b**4 + 30 * b**3 + 32 * b**2 + 38 * b + 5),
        ),
    )
    + _forms(
        18,
        sigma_F=("upper", lambda b: (20 * b - 1) / (10 * b)),
        sigma_E=(
            "upper",
            lambda b: 5 * (2 * b**4 + 21 * b**3 + 29 * b**2 + 38 * b + 5) / _gbdf5_denominator(b),
        ),
        lambda_I=(
            "lower",
            lambda b: 5 * (2 * b**4 + 3 * b**3 + 25 * b**2 - 9 * b - 3) / _gbdf5_denominator(b),
        ),
        intensity=(
            "lower",
            lambda b: (2 * b**4 + 3 * b**3 + 25 * b**2 - 9 * b - 3)
            / (2 * b**4 + 21 * b**3 + 29 * b**2 + 38 * b + 5),
        ),
    ),
    ("NIMEX", 2): _forms(
        1.2,
        sigma_F=("eq", _one),
        sigma_E=("eq", lambda d: (4 * d - 1) / (4 * d - 2)),
        lambda_I=("eq", _nimex2_lambda),
        intensity=("eq", lambda d: _nimex2_lambda(d) * (4 * d - 2) / (4 * d - 1)),
    ),
    ("NIMEX", 3): _forms(
        2,
        sigma_F=("eq", _one),
        sigma_E=("eq", lambda d: (36 * d**2 - 18 * d + 3) / (36 * d**2 - 36 * d + 10)),
        lambda_I=("lower", lambda d: (24 * d**2 - 21 * d + 3) / (36 * d**2 - 36 * d + 10)),
        intensity=("lower", lambda d: (24 * d**2 - 21 * d + 3) / (36 * d**2 - 18 * d + 3)),
    ),
    ("SIEMS", 2): _siems_forms(
        lambda g: (2 * g - 1) / (2 * g), lambda g: (2 * g - 1) / (2 * g + 1), 1
    ),
    ("SIEMS", 3): _siems_forms(
        lambda g: 3 * (2 * g - 1) ** 2 / (12 * g**2 - 2),
        lambda g: (2 * g - 1) ** 2 / (4 * g**2 + 4 * g - 1),
        1,
    ),
    ("SIEMS", 4): _siems_forms(
        lambda g: 3 * (2 * g - 1) ** 3 / (4 * (6 * g**3 - 3 * g + 1)),
        lambda g: (2 * g - 1) ** 3 / (8 * g**3 + 12 * g**2 - 6 * g + 1),
        1.2,
    ),
    ("SIEMS", 5): _siems_forms(
        lambda g: 15 * (2 * g - 1) ** 4 / (16 * (15 * g**4 - 15 * g**2 + 10 * g - 2)),
        lambda g: (2 * g - 1) ** 4 / (16 * g**4 + 32 * g**3 - 24 * g**2 + 8 * g - 1),
        1.4,
    ),
    ("SIEMS", 6): _siems_forms(
        lambda g: 15 * (2 * g - 1) ** 5 / (16 * (30 * g**5 - 50 * g**3 + 50 * g**2 - 20 * g + 3)),
        lambda g: (2 * g - 1) ** 5
        / (32 * g**5 + 80 * g**4 - 80 * g**3 + 40 * g**2 - 10 * g + 1),
        2,
        17,
    ),
    ("SIEMS", 7): _siems_forms(
        lambda g: 105
        * (1 - 2 * g) ** 6
        / (16 * (420 * g**6 - 1050 * g**4 + 1400 * g**3 - 840 * g**2 + 252 * g - 31)),
        lambda g: (1 - 2 * g) ** 6
        / (64 * g**6 + 192 * g**5 - 240 * g**4 + 160 * g**3 - 60 * g**2 + 12 * g - 1),
        2.2,
        9,
    ),
    ("SIEMS", 8): _siems_forms(
        lambda g: 105
        * (2 * g - 1) ** 7
        / (32 * (420 * g**7 - 1470 * g**5 + 2450 * g**4 - 1960 * g**3 + 882 * g**2 - 217 * g + 23)),
        lambda g: (2 * g - 1) ** 7
        / (128 * g**7 + 448 * g**6 - 672 * g**5 + 560 * g**4 - 280 * g**3 + 84 * g**2 - 14 * g + 1),
        2.5,
        6,
    ),
}

# leading truncation coefficients (coeff_u, coeff_F) as functions of the family parameter
_TRUNCATION_FORMS: dict[tuple[str, int], Callable[[float], tuple[float, float]]] = {
    ("WBDF", 2): lambda a: ((1 - 3 * a) / 6, a),
    ("WBDF", 3): lambda a: ((1 - 4 * a) / 12, a),
    ("WBDF", 4): lambda a: ((1 - 5 * a) / 20, a),
    ("WBDF", 5): lambda a: ((1 - 6 * a) / 30, a),
    ("MBDF", 2): lambda s: ((s + 2) / (3 * (1 - s)), s / (s - 1)),
    ("MBDF", 3): lambda s: ((s + 3) / (4 * (1 - s)), s / (s - 1)),
    ("GBDF", 2): lambda b: ((1 - 3 * b) / 6, b),
    ("GBDF", 3): lambda b: ((1 - b - 3 * b**2) / 12, (b**2 + b) / 2),
    ("GBDF", 4): lambda b: ((3 - 5 * b**3 - 10 * b**2) / 60, (b**3 + 3 * b**2 + 2 * b) / 6),
    ("GBDF", 5): lambda b: (
        (24 - 15 * b**4 - 70 * b**3 - 75 * b**2 + 16 * b) / 720,
        b * (b**3 + 6 * b**2 + 11 * b + 6) / 24,
    ),
    ("NIMEX", 2): lambda d: (-(3 * d**2 - 3 * d + 1) / 3, d**2),
    ("NIMEX", 3): lambda d: ((-4 * d**3 + 6 * d**2 - 4 * d + 1) / 4, d**3),
    ("SIEMS", 2): lambda g: (-(3 * g - 1) / 6, g),
    ("SIEMS", 3): lambda g: (-(6 * g**2 - 4 * g + 1) / 12, g**2),
    ("SIEMS", 4): lambda g: (-(10 * g**3 - 10 * g**2 + 5 * g - 1) / 20, g**3),
    ("SIEMS", 5): lambda g: (-(15 * g**4 - 20 * g**3 + 15 * g**2 - 6 * g + 1) / 30, g**4),
    ("SIEMS", 6): lambda g: (
        (-21 * g**5 + 35 * g**4 - 35 * g**3 + 21 * g**2 - 7 * g + 1) / 42,
        g**5,
    ),
    ("SIEMS", 7): lambda g: (
        -(28 * g**6 - 56 * g**5 + 70 * g**4 - 56 * g**3 + 28 * g**2 - 8 * g + 1) / 56,
        g**6,
    ),
    ("SIEMS", 8): lambda g: (
        (-36 * g**7 + 84 * g**6 - 126 * g**5 + 126 * g**4 - 84 * g**3 + 36 * g**2 - 9 * g + 1) / 72,
        g**7,
    ),
}


def closed_forms(family: str, k: int, param: float | None) -> list[ClosedForm]:
    forms = _CLOSED_FORMS.get((family.upper(), k), [])
    x = 0.0 if param is None else float(param)
    return [form for form in forms if form.applies(x)]


def truncation_closed_form(family: str, k: int, param: float) -> tuple[float, float] | None:
    formula = _TRUNCATION_FORMS.get((family.upper(), k))
    return None if formula is None else formula(float(param))


def _compare(computed: float, expected: float, relation: Relation) -> bool:
    slack = TABLE_SLACK * max(1.0, abs(expected))
    if relation == "eq":
        return abs(computed - expected) <= slack
    if relation == "upper":
        return computed <= expected + slack
    return computed >= expected - slack


def compare_report(family: str, k: int, param: float | None, report: IndicatorReport) -> list[TableRow]:
    rows: list[TableRow] = []
    forms = closed_forms(family, k, param)
    for quantity in QUANTITIES:
        computed = float(getattr(report, quantity))
        matching = [form for form in forms if form.quantity == quantity]
        if not matching:
            rows.append(TableRow(family=family.upper(), k=k, param=param, quantity=quantity, computed=computed))
            continue
        for form in matching:
            expected = form.formula(float(param) if param is not None else 0.0)
            rows.append(
                TableRow(
                    family=family.upper(),
                    k=k,
                    param=param,
                    quantity=quantity,
                    computed=computed,
                    formula=expected,
                    relation=form.relation,
                    discrepancy=computed - expected,
                    passed=_compare(computed, expected, form.relation),
                )
            )
    return rows


def family_table(
    family: str,
    k: int,
    params: Sequence[Any] | None = None,
    *,
    grid_size: int | None = None,
) -> list[TableRow]:
    family = family.upper()
    if family == "BDF":
        scheme = make_scheme("BDF", k)
        return compare_report(family, k, None, indicators(scheme, grid_size))

    grid = list(params) if params else default_grid(family, k)
    if not grid:
        raise TableError(f"no parameter grid for {family}{k}.")
    sweep = indicator_sweep(family, k, grid, grid_size=grid_size)
    rows: list[TableRow] = []
    for row in sweep.rows:
        rows.extend(compare_report(family, k, row.param, row.report))
    return rows


def build_tables(
    families: Iterable[str],
    orders: Sequence[int] | None = None,
    params: Sequence[Any] | None = None,
    *,
    grid_size: int | None = None,
) -> list[TableRow]:
    rows: list[TableRow] = []
    for family in families:
        options = get_family_options(family)
        ks = [k for k in options["orders"] if not orders or k in orders]
        if family.upper() == "BDF" and not orders:
            ks = [1]
        for k in ks:
            rows.extend(family_table(family, k, params, grid_size=grid_size))

    failures = [row for row in rows if row.passed is False]
    LOGGER.info("Tables built rows=%s failures=%s", len(rows), len(failures))
    for row in failures:
        LOGGER.warning(
            "Closed form mismatch family=%s k=%s param=%s quantity=%s computed=%s formula=%s relation=%s",
            row.family,
            row.k,
            row.param,
            row.quantity,
            row.computed,
            row.formula,
            row.relation,
        )
    return rows


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "PASS" if value else "FAIL"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def row_cells(row: TableRow) -> list[str]:
    return [
        row.family,
        str(row.k),
        _cell(row.param),
        row.quantity,
        _cell(row.computed),
        _cell(row.formula),
        _cell(row.relation),
        _cell(row.discrepancy),
        _cell(row.passed),
    ]


def write_table_csv(rows: Iterable[TableRow], path: str | Path) -> Path:
    target = Path(path)
    with target.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(TABLE_HEADER)
        for row in rows:
            writer.writerow(row_cells(row))
    return target
