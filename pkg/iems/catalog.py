from copy import deepcopy
from fractions import Fraction
from math import sqrt
from typing import Any

_GOLDEN = (1 + sqrt(5)) / 2
_F = Fraction

_FAMILY_CATALOG: dict[str, Any] = {
    "version": "2026-10.v1",
    "families": {
        "WBDF": {
            "param_name": "alpha",
            "description": "Weighted BDF: prefactor (alpha z - alpha + 1) z^(k-1).",
            "orders": [2, 3, 4, 5],
            "default_param": {2: 2, 3: 2, 4: 2, 5: 2},
            "default_grid": {
                2: [1, 2, 3, 5, 10],
                3: [1, 2, 3, 5, 10],
                4: [_F(6, 5), 2, 3, 5, 10],
                5: [1, 2, 3, 5, 10],
            },
            "zero_stability": {
                k: {"value": 0.5, "closed_form": "1/2"} for k in (2, 3, 4, 5)
            },
        },
        "MBDF": {
            "param_name": "s",
            "description": "Modified BDF: BDF implicit part, rho_b = z^k + (z-1)^k/(s-1).",
            "orders": [2, 3, 4, 5],
            "default_param": {2: 5, 3: 5, 4: 10, 5: 20},
            "default_grid": {
                2: [2, 3, 4, 5, 6, 7, 8, 9, 10],
                3: [3, 5, 10],
                4: [6, 8, 10, 20],
                5: [13, 15, 20, 40],
            },
            "zero_stability": {
                2: {"value": 1.0, "closed_form": "1"},
                3: {"value": 2.0, "closed_form": "2"},
                4: {"value": 5.0, "closed_form": "5"},
                5: {"value": 1 + _GOLDEN**5, "closed_form": "1+phi^5"},
            },
        },
        "GBDF": {
            "param_name": "beta",
            "description": "Generalized BDF: explicit beta-polynomial coefficients.",
            "orders": [2, 3, 4, 5],
            "default_param": {2: 2, 3: 2, 4: 9, 5: 20},
            "default_grid": {
                2: [1, 2, 5, 10],
                3: [1, 2, 5, 10],
                4: [1, 3, 6, 9],
                5: [1, 5, 10, 18, 20],
            },
            "zero_stability": {
                2: {"value": 0.5, "closed_form": "1/2"},
                3: {"value": sqrt(2) / 2, "closed_form": "sqrt(2)/2"},
                4: {"value": (sqrt(7) - 1) / 2, "closed_form": "(sqrt(7)-1)/2"},
                5: {"value": sqrt(2 + sqrt(2.5)) - 1, "closed_form": "sqrt(2+sqrt(5/2))-1"},
            },
        },
        "NIMEX": {
            "param_name": "delta",
            "description": "Nonlinear-implicit-explicit family: prefactor (delta z - delta + 1)^k.",
            "orders": [2, 3, 4, 5, 6, 7, 8],
            "default_param": {2: 3, 3: 3, 4: 3, 5: 3, 6: 4, 7: 4, 8: 4},
            "default_grid": {
                2: [_F(6, 5), 2, _F(11, 4), 5, _F(17, 2)],
                3: [2, 3, 5, 10],
                4: [1, 2, 3, 5],
                5: [1, 2, 3, 5],
                6: [_F(3, 2), 2, 3, 5],
                7: [_F(3, 2), 2, 3, 5],
                8: [2, 3, 4, 6],
            },
            "zero_stability": {
                2: {"value": 0.5, "closed_form": "1/2"},
                3: {"value": 0.5, "closed_form": "1/2"},
                4: {"value": 0.5, "closed_form": "1/2"},
                5: {"value": (5 + sqrt(5)) / 10, "closed_form": "(5+sqrt(5))/10"},
                6: {"value": 1.0, "closed_form": "1"},
                7: {"value": 1.32799, "closed_form": "1.32799"},
                8: {"value": (2 + sqrt(2)) / 2, "closed_form": "(2+sqrt(2))/2"},
            },
        },
        "SIEMS": {
            "param_name": "gamma",
            "description": "Stabilized IEMS: prefactor z (gamma z - gamma + 1)^(k-1).",
            "orders": [2, 3, 4, 5, 6, 7, 8],
            "default_param": {2: 2, 3: 2, 4: 2, 5: 2, 6: 4, 7: 4, 8: 4},
            "default_grid": {
                2: [1, 2, 3, 5, 10],
                3: [1, 2, 3, 5, 10],
                4: [_F(6, 5), 3, 7, 10, 30],
                5: [_F(7, 5), 3, 7, 10, 30],
                6: [2, 4, 10, 15, 17],
                7: [_F(11, 5), 4, 6, 8, 9],
                8: [_F(5, 2), 3, 4, 5, 6],
            },
            "zero_stability": {
                2: {"value": 0.5, "closed_form": "1/2"},
                3: {"value": 0.5, "closed_form": "1/2"},
                4: {"value": 0.5, "closed_form": "1/2"},
                5: {"value": 0.658691, "closed_form": "0.658691"},
                6: {"value": 1.0, "closed_form": "1"},
                7: {"value": 1.37957, "closed_form": "1.37957"},
                8: {"value": 1.7863, "closed_form": "1.7863"},
            },
        },
        "BDF": {
            "param_name": None,
            "description": "Classic BDF-k with the extrapolated explicit part.",
            "orders": [1, 2, 3, 4, 5, 6],
            "default_param": {},
            "default_grid": {},
            "zero_stability": {},
        },
    },
    "indicator_ranges": {
        ("WBDF", 2): (1, None),
        ("WBDF", 3): (1, None),
        ("WBDF", 4): (_F(6, 5), None),
        ("WBDF", 5): (1, None),
        ("MBDF", 2): (1, None),
        ("MBDF", 3): (2, None),
        ("GBDF", 2): (1, None),
        ("GBDF", 3): (1, None),
        ("GBDF", 4): (1, None),
        ("GBDF", 5): (1, None),
        ("NIMEX", 2): (_F(6, 5), None),
        ("NIMEX", 3): (2, None),
        ("SIEMS", 2): (1, None),
        ("SIEMS", 3): (1, None),
        ("SIEMS", 4): (_F(6, 5), None),
        ("SIEMS", 5): (_F(7, 5), None),
        ("SIEMS", 6): (2, 17),
        ("SIEMS", 7): (_F(11, 5), 9),
        ("SIEMS", 8): (_F(5, 2), 6),
    },
}

FAMILIES = tuple(_FAMILY_CATALOG["families"])


def get_family_catalog() -> dict[str, Any]:
    return deepcopy(_FAMILY_CATALOG)


def get_family_options(family: str) -> dict[str, Any]:
    return deepcopy(_FAMILY_CATALOG["families"][family.upper()])


def zero_stability_threshold(family: str, k: int) -> float | None:
    entry = _FAMILY_CATALOG["families"][family.upper()]["zero_stability"].get(k)
    return None if entry is None else float(entry["value"])


def indicator_range(family: str, k: int) -> tuple[Any, Any] | None:
    return _FAMILY_CATALOG["indicator_ranges"].get((family.upper(), k))


def default_grid(family: str, k: int) -> list[Any]:
    return list(_FAMILY_CATALOG["families"][family.upper()]["default_grid"].get(k, []))


def default_param(family: str, k: int) -> Any:
    return _FAMILY_CATALOG["families"][family.upper()]["default_param"].get(k)
