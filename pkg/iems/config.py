import logging
import os
from functools import lru_cache

from pydantic import BaseModel, ConfigDict, Field

LOGGER = logging.getLogger(__name__)

_LOG_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}


class ConfigError(RuntimeError):
    pass


class Settings(BaseModel):
    model_config = ConfigDict(frozen=True)

    threads: int = 1
    circle_tol: float = 1e-9
    pairing_tol: float = 1e-7
    theta_grid: int = 8192
    refine_tol: float = 1e-13
    toeplitz_max_n: int = 512
    power_tol: float = 1e-10
    power_max_iter: int = 10000
    power_seed: int = 0
    blowup_threshold: float = 1e12
    log_level: str = Field(default="WARNING", min_length=1)
    strict_params: bool = False


def _read_env(name: str) -> str:
    return (os.getenv(name) or "").strip()


def _is_truthy(value: str) -> bool:
    return value.strip().lower() in {"1", "true", "yes", "on"}


def _read_int_env(name: str, default: int) -> int:
    raw = _read_env(name)
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        LOGGER.warning("Ignoring malformed integer env=%s value=%r", name, raw)
        return default


def _read_float_env(name: str, default: float) -> float:
    raw = _read_env(name)
    if not raw:
        return default
    try:
        return float(raw)
    except ValueError:
        LOGGER.warning("Ignoring malformed float env=%s value=%r", name, raw)
        return default


def _read_log_level() -> str:
    level = _read_env("IMEX_LOG_LEVEL").upper()
    return level if level in _LOG_LEVELS else "WARNING"


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    defaults = Settings()
    return Settings(
        threads=max(1, _read_int_env("IMEX_THREADS", defaults.threads)),
        circle_tol=_read_float_env("IMEX_CIRCLE_TOL", defaults.circle_tol),
        pairing_tol=_read_float_env("IMEX_PAIRING_TOL", defaults.pairing_tol),
        theta_grid=_read_int_env("IMEX_THETA_GRID", defaults.theta_grid),
        refine_tol=_read_float_env("IMEX_REFINE_TOL", defaults.refine_tol),
        toeplitz_max_n=_read_int_env("IMEX_TOEPLITZ_MAX_N", defaults.toeplitz_max_n),
        power_tol=_read_float_env("IMEX_POWER_TOL", defaults.power_tol),
        power_max_iter=_read_int_env("IMEX_POWER_MAX_ITER", defaults.power_max_iter),
        power_seed=_read_int_env("IMEX_POWER_SEED", defaults.power_seed),
        blowup_threshold=_read_float_env("IMEX_BLOWUP", defaults.blowup_threshold),
        log_level=_read_log_level(),
        strict_params=_is_truthy(_read_env("IMEX_STRICT_PARAMS")),
    )


def validate_settings() -> Settings:
    settings = get_settings()
    if settings.theta_grid < 3:
        raise ConfigError(f"IMEX_THETA_GRID must be at least 3, got {settings.theta_grid}.")
    if settings.toeplitz_max_n < 2:
        raise ConfigError(
            f"IMEX_TOEPLITZ_MAX_N must be at least 2, got {settings.toeplitz_max_n}."
        )
    if settings.power_max_iter < 1:
        raise ConfigError("IMEX_POWER_MAX_ITER must be positive.")
    for name, value in (
        ("IMEX_CIRCLE_TOL", settings.circle_tol),
        ("IMEX_PAIRING_TOL", settings.pairing_tol),
        ("IMEX_REFINE_TOL", settings.refine_tol),
        ("IMEX_POWER_TOL", settings.power_tol),
        ("IMEX_BLOWUP", settings.blowup_threshold),
    ):
        if not value > 0:
            raise ConfigError(f"{name} must be positive, got {value}.")

    LOGGER.info(
        "IEMS config threads=%s grid=%s toeplitz_max_n=%s circle_tol=%s",
        settings.threads,
        settings.theta_grid,
        settings.toeplitz_max_n,
        settings.circle_tol,
    )
    return settings


def thread_count() -> int:
    return max(1, min(get_settings().threads, os.cpu_count() or 1))
