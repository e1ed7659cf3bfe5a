"""
Runtime configuration for tailcert.

Values come from the environment (optionally a local .env file) with the
defaults below. Anything a certificate depends on is echoed into its provenance,
so changing a value here never silently changes an emitted certificate.
"""

import logging
import os
import sys
from dataclasses import dataclass, fields
from typing import Any, Dict, Optional

from dotenv import load_dotenv
from pydantic import TypeAdapter, ValidationError

from tailcert.errors import ConfigError

# Load environment variables
load_dotenv()

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

# Global singleton instance
_settings: Optional["Settings"] = None


class ActivationConstants:
    """
    Lipschitz constants of the supported activations.
    relu, tanh and identity are 1-Lipschitz; logistic has derivative at most 1/4.
    """
    RELU = 1.0
    TANH = 1.0
    LOGISTIC = 0.25
    IDENTITY = 1.0


@dataclass(frozen=True)
class Settings:
    paper_constant: float = 2.0
    c6: float = 1.0
    default_cheeger: float = 0.1
    spectral_tol: float = 1e-6
    spectral_max_iters: int = 10000
    slack_sigmas: float = 3.0
    min_expected_exceedances: float = 10.0
    hill_divisor: int = 20
    hill_cap: int = 1000
    random_directions: int = 8
    grid_steps: int = 50
    log_level: str = "INFO"


def _positive_float(key: str, default: float) -> float:
    raw = os.getenv(key)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {raw!r}")
    if not value > 0 or value == float("inf"):
        raise ConfigError(key, f"expected a finite positive number, got {raw!r}")
    return value


def _positive_int(key: str, default: int) -> int:
    raw = os.getenv(key)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {raw!r}")
    if value <= 0:
        raise ConfigError(key, f"expected a positive integer, got {raw!r}")
    return value


def _nonnegative_int(key: str, default: int) -> int:
    raw = os.getenv(key)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {raw!r}")
    if value < 0:
        raise ConfigError(key, f"expected a nonnegative integer, got {raw!r}")
    return value


def load_settings() -> Settings:
    """Read every TAILCERT_* variable, validating as we go."""
    level = os.getenv("TAILCERT_LOG_LEVEL", "INFO").upper()
    if level not in LOG_LEVELS:
        raise ConfigError("TAILCERT_LOG_LEVEL", f"unknown level {level!r}")

    return Settings(
        paper_constant=_positive_float("TAILCERT_PAPER_CONSTANT", 2.0),
        c6=_positive_float("TAILCERT_C6", 1.0),
        default_cheeger=_positive_float("TAILCERT_DEFAULT_CHEEGER", 0.1),
        spectral_tol=_positive_float("TAILCERT_SPECTRAL_TOL", 1e-6),
        spectral_max_iters=_positive_int("TAILCERT_SPECTRAL_MAX_ITERS", 10000),
        slack_sigmas=_positive_float("TAILCERT_SLACK_SIGMAS", 3.0),
        min_expected_exceedances=_positive_float("TAILCERT_MIN_EXPECTED_EXCEEDANCES", 10.0),
        hill_divisor=_positive_int("TAILCERT_HILL_DIVISOR", 20),
        hill_cap=_positive_int("TAILCERT_HILL_CAP", 1000),
        random_directions=_nonnegative_int("TAILCERT_RANDOM_DIRECTIONS", 8),
        grid_steps=_positive_int("TAILCERT_GRID_STEPS", 50),
        log_level=level,
    )


def get_settings() -> Settings:
    """Get or create the settings singleton"""
    global _settings
    if _settings is None:
        _settings = load_settings()
    return _settings


def reset_settings() -> None:
    """Forget cached settings so the next get_settings() re-reads the environment."""
    global _settings
    _settings = None


def configure_logging(level: Optional[str] = None) -> None:
    """Send log records to stderr; stdout is reserved for JSON results."""
    logging.basicConfig(
        level=(level or get_settings().log_level).upper(),
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )


def settings_from_record(record: Dict[str, Any]) -> Settings:
    """Rebuild Settings recorded in a run manifest, with the same checks as load_settings."""
    known = {f.name for f in fields(Settings)}
    unknown = sorted(set(record) - known)
    if unknown:
        raise ConfigError(unknown[0], "not a tailcert setting")
    try:
        settings = TypeAdapter(Settings).validate_python(dict(record))
    except ValidationError as e:
        error = e.errors()[0]
        raise ConfigError(str(error["loc"][0]), error["msg"])

    for f in fields(Settings):
        value = getattr(settings, f.name)
        if f.name == "log_level":
            if value not in LOG_LEVELS:
                raise ConfigError(f.name, f"unknown level {value!r}")
        elif f.name == "random_directions":
            if value < 0:
                raise ConfigError(f.name, f"expected a nonnegative integer, got {value!r}")
        elif not 0 < value < float("inf"):
            raise ConfigError(f.name, f"expected a finite positive number, got {value!r}")
    return settings


def use_settings(settings: Settings) -> None:
    """Install settings as the singleton, bypassing the environment."""
    global _settings
    _settings = settings
