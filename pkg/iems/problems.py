import json
import logging
from collections.abc import Callable
from copy import deepcopy
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from iems.numcore import NumcoreError, sym_eig

LOGGER = logging.getLogger(__name__)

_PSD_TOL = 1e-10

State = np.ndarray
StateMap = Callable[[State], State]
TimeMap = Callable[[float], State]


class ProblemConfigError(RuntimeError):
    def __init__(self, message: str, *, line: int | None = None, column: int | None = None):
        super().__init__(message)
        self.line = line
        self.column = column


class ProblemSpec(BaseModel):
    """Semi-discrete problem u' + varpi L u = F(u) + g(t)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str = "custom"
    dim: int = Field(ge=1)
    L: np.ndarray
    varpi: float = Field(gt=0)
    mu0: float = Field(default=0.0, ge=0)
    mu1: float = 0.0
    nonlinearity: StateMap
    forcing: TimeMap | None = None
    exact: TimeMap | None = None
    initial: np.ndarray | None = None
    T: float = Field(gt=0)

    @model_validator(mode="after")
    def _check_operator(self) -> "ProblemSpec":
        if self.mu0 >= self.varpi:
            raise ValueError(f"mu0={self.mu0} must be below varpi={self.varpi}")
        if self.L.ndim == 1:
            if self.L.shape != (self.dim,):
                raise ValueError(f"diagonal L has length {self.L.size}, expected {self.dim}")
            if np.any(self.L < 0):
                raise ValueError("diagonal L must be nonnegative")
        elif self.L.ndim == 2:
            if self.L.shape != (self.dim, self.dim):
                raise ValueError(f"dense L has shape {self.L.shape}, expected {self.dim}x{self.dim}")
            try:
                smallest = float(sym_eig(self.L)[0])
            except NumcoreError as exc:
                raise ValueError(f"dense L must be symmetric: {exc}") from exc
            if smallest < -_PSD_TOL:
                raise ValueError(f"dense L is not positive semidefinite (min eig {smallest:.3e})")
        else:
            raise ValueError("L must be a vector (diagonal) or a square matrix")
        return self

    @property
    def is_diagonal(self) -> bool:
        return self.L.ndim == 1

    def apply_L(self, u: State) -> State:
        return self.L * u if self.is_diagonal else self.L @ u

    def F(self, t: float, u: State) -> State:
        value = self.nonlinearity(u)
        if self.forcing is not None:
            value = value + self.forcing(t)
        return value

    def energy(self, e: State) -> float:
        return float(e @ self.apply_L(e))


class OperatorSection(BaseModel):
    type: Literal["diagonal", "dense", "laplacian1d"]
    data: list[float] | list[list[float]] | None = None
    m: int | None = Field(default=None, ge=1)


class NonlinearitySection(BaseModel):
    name: Literal["none", "sine", "quadratic"] = "none"
    amplitude: float | None = None


class ProblemConfig(BaseModel):
    name: str = "custom"
    dim: int = Field(ge=1)
    L: OperatorSection
    varpi: float = Field(gt=0)
    mu0: float = Field(default=0.0, ge=0)
    mu1: float = 0.0
    nonlinearity: NonlinearitySection = Field(default_factory=NonlinearitySection)
    exact: Literal["decay", "trig", "logistic", "zero"] | None = None
    T: float = Field(default=1.0, gt=0)


_PRESETS: dict[str, dict[str, Any]] = {
    "P1": {
        "name": "P1",
        "dim": 1,
        "L": {"type": "diagonal", "data": [1.0]},
        "varpi": 1.0,
        "mu0": 0.0,
        "nonlinearity": {"name": "none", "amplitude": 0.0},
        "exact": "decay",
        "T": 1.0,
    },
    "P2": {
        "name": "P2",
        "dim": 4,
        "L": {"type": "diagonal", "data": [1.0, 10.0, 100.0, 1000.0]},
        "varpi": 1.0,
        "mu0": 0.1,
        "nonlinearity": {"name": "sine", "amplitude": 0.1},
        "exact": "trig",
        "T": 1.0,
    },
    "P3": {
        "name": "P3",
        "dim": 64,
        "L": {"type": "laplacian1d", "m": 64},
        "varpi": 1.0,
        "mu0": 0.1,
        "nonlinearity": {"name": "sine", "amplitude": 0.1},
        "exact": "trig",
        "T": 1.0,
    },
    "LOGISTIC": {
        "name": "LOGISTIC",
        "dim": 1,
        "L": {"type": "diagonal", "data": [1.0]},
        "varpi": 1.0,
        "mu0": 0.5,
        "nonlinearity": {"name": "quadratic", "amplitude": 1.0},
        "exact": "logistic",
        "T": 1.0,
    },
}

PRESET_NAMES = tuple(_PRESETS)


def get_preset(name: str) -> dict[str, Any]:
    key = name.strip().upper()
    if key not in _PRESETS:
        raise ProblemConfigError(f"unknown problem preset {name!r}; choose from {', '.join(PRESET_NAMES)}.")
    return deepcopy(_PRESETS[key])


def laplacian_1d(m: int) -> np.ndarray:
    h = 1.0 / (m + 1)
    main = np.full(m, 2.0)
    off = np.full(m - 1, -1.0)
    return (np.diag(main) + np.diag(off, 1) + np.diag(off, -1)) / h**2


def _build_operator(section: OperatorSection, dim: int) -> tuple[np.ndarray, np.ndarray]:
    if section.type == "laplacian1d":
        m = section.m or dim
        if m != dim:
            raise ProblemConfigError(f"laplacian1d m={m} does not match dim={dim}.")
        grid = np.arange(1, m + 1) / (m + 1)
        return laplacian_1d(m), np.sin(np.pi * grid)
    if section.data is None:
        raise ProblemConfigError(f"operator type {section.type} needs data.")
    operator = np.asarray(section.data, dtype=float)
    expected_ndim = 1 if section.type == "diagonal" else 2
    if operator.ndim != expected_ndim:
        raise ProblemConfigError(f"operator type {section.type} needs a {expected_ndim}-D data array.")
    return operator, 1.0 / np.arange(1, dim + 1)


def _nonlinearity(section: NonlinearitySection, mu0: float) -> StateMap:
    amplitude = mu0 if section.amplitude is None else section.amplitude
    if section.name == "sine":
        return lambda u: amplitude * np.sin(u)
    if section.name == "quadratic":
        return lambda u: amplitude * u**2
    return lambda u: np.zeros_like(u)


def exact_pair(name: str, profile: np.ndarray) -> tuple[TimeMap, TimeMap]:
    """Exact solution and its time derivative for a named preset."""
    if name == "decay":
        return (lambda t: profile * np.exp(-t), lambda t: -profile * np.exp(-t))
    if name == "trig":
        return (
            lambda t: profile * (1.0 + 0.5 * np.sin(2.0 * t)),
            lambda t: profile * np.cos(2.0 * t),
        )
    if name == "logistic":
        return (
            lambda t: profile / (1.0 + np.exp(t)),
            lambda t: -profile * np.exp(t) / (1.0 + np.exp(t)) ** 2,
        )
    if name == "zero":
        return (lambda t: np.zeros_like(profile), lambda t: np.zeros_like(profile))
    raise ProblemConfigError(f"unknown exact solution preset {name!r}.")


def manufactured_problem(
    *,
    L: np.ndarray,
    varpi: float,
    nonlinearity: StateMap,
    exact: TimeMap,
    derivative: TimeMap,
    T: float,
    mu0: float = 0.0,
    mu1: float = 0.0,
    name: str = "custom",
) -> ProblemSpec:
    operator = np.asarray(L, dtype=float)
    apply_L = (lambda u: operator * u) if operator.ndim == 1 else (lambda u: operator @ u)

    def forcing(t: float) -> State:
        u = exact(t)
        return derivative(t) + varpi * apply_L(u) - nonlinearity(u)

    return ProblemSpec(
        name=name,
        dim=operator.shape[0],
        L=operator,
        varpi=varpi,
        mu0=mu0,
        mu1=mu1,
        nonlinearity=nonlinearity,
        forcing=forcing,
        exact=exact,
        T=T,
    )


def build_problem(config: ProblemConfig) -> ProblemSpec:
    operator, profile = _build_operator(config.L, config.dim)
    nonlinearity = _nonlinearity(config.nonlinearity, config.mu0)
    try:
        if config.exact is None:
            return ProblemSpec(
                name=config.name,
                dim=config.dim,
                L=operator,
                varpi=config.varpi,
                mu0=config.mu0,
                mu1=config.mu1,
                nonlinearity=nonlinearity,
                initial=profile,
                T=config.T,
            )
        exact, derivative = exact_pair(config.exact, profile)
        return manufactured_problem(
            L=operator,
            varpi=config.varpi,
            nonlinearity=nonlinearity,
            exact=exact,
            derivative=derivative,
            T=config.T,
            mu0=config.mu0,
            mu1=config.mu1,
            name=config.name,
        )
    except ValidationError as exc:
        raise ProblemConfigError(f"problem {config.name} is invalid: {exc}") from exc


def _merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    merged = deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def parse_problem_config(payload: dict[str, Any]) -> ProblemConfig:
    data = dict(payload)
    preset = data.pop("preset", None)
    if preset is not None:
        data = _merge(get_preset(str(preset)), data)
    try:
        return ProblemConfig.model_validate(data)
    except ValidationError as exc:
        raise ProblemConfigError(f"problem config is invalid: {exc}") from exc


def load_problem_config(path: str | Path) -> ProblemConfig:
    target = Path(path)
    try:
        text = target.read_text(encoding="utf-8")
    except OSError as exc:
        raise ProblemConfigError(f"cannot read problem config {target}: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemConfigError(
            f"{target}:{exc.lineno}:{exc.colno}: {exc.msg}",
            line=exc.lineno,
            column=exc.colno,
        ) from exc
    if not isinstance(payload, dict):
        raise ProblemConfigError(f"{target}: top-level JSON value must be an object.")
    LOGGER.info("Problem config loaded path=%s preset=%s", target, payload.get("preset"))
    return parse_problem_config(payload)


def preset_problem(name: str, **overrides: Any) -> ProblemSpec:
    return build_problem(parse_problem_config({"preset": name, **overrides}))
