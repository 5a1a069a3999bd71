"""
Startup Environment Variable Validation

Centralized validation of the SEMVOC_* environment variables, called early
by the CLI. With SEMVOC_STRICT_ENV=true invalid values abort the run;
otherwise they are logged as warnings and the defaults apply.
"""

import logging
import os

logger = logging.getLogger(__name__)

VALID_LOG_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}
TRUE_VALUES = {"true", "1", "yes"}
VALID_BOOLEANS = TRUE_VALUES | {"false", "0", "no"}
VALID_PROFILES = {"desk", "paper"}


def env_flag(name: str, default: bool) -> bool:
    """Read a boolean SEMVOC_* flag; true, 1 and yes count as set."""
    raw = os.getenv(name)
    if raw is None:
        return default
    return raw.strip().lower() in TRUE_VALUES


def resolve_log_level(name: str | None) -> int:
    """Numeric level for a level name, INFO for anything unrecognized."""
    name = (name or "INFO").strip().upper()
    return getattr(logging, name) if name in VALID_LOG_LEVELS else logging.INFO


def validate_environment() -> list[str]:
    """
    Validate SEMVOC_* environment variables at startup.

    Returns list of warning messages (empty = all good).
    Raises RuntimeError in strict mode when any check fails.
    """
    strict = env_flag("SEMVOC_STRICT_ENV", False)

    warnings: list[str] = []

    _check_integer_vars(warnings)
    _check_log_level(warnings)
    _check_boolean_vars(warnings)
    _check_profile(warnings)

    if warnings and strict:
        for w in warnings:
            logger.error(w)
        raise RuntimeError(
            "Environment validation failed in strict mode:\n"
            + "\n".join(f"  - {w}" for w in warnings)
        )

    for w in warnings:
        logger.warning(w)

    if warnings:
        logger.info("Environment validation complete: %d warning(s)", len(warnings))
    else:
        logger.debug("Environment validation passed")

    return warnings


def _check_integer_vars(warnings: list[str]) -> None:
    """Validate integer environment variables parse correctly and are in valid ranges."""
    int_vars = {
        "SEMVOC_MAX_WORKERS": {"min": 1, "max": 256},
        "SEMVOC_LOG_EVERY": {"min": 1},
    }

    for var_name, constraints in int_vars.items():
        raw = os.getenv(var_name)
        if raw is None:
            continue

        try:
            value = int(raw)
        except ValueError:
            warnings.append(f"{var_name}={raw!r} is not a valid integer")
            continue

        min_val = constraints.get("min")
        max_val = constraints.get("max")

        if min_val is not None and value < min_val:
            warnings.append(f"{var_name}={value} is below minimum ({min_val})")
        if max_val is not None and value > max_val:
            warnings.append(f"{var_name}={value} is above maximum ({max_val})")


def _check_log_level(warnings: list[str]) -> None:
    """Validate SEMVOC_LOG_LEVEL is a valid Python log level."""
    raw = os.getenv("SEMVOC_LOG_LEVEL")
    if raw is None:
        return

    if raw.strip().upper() not in VALID_LOG_LEVELS:
        warnings.append(
            f"SEMVOC_LOG_LEVEL={raw!r} is not a valid log level. "
            f"Expected one of: {', '.join(sorted(VALID_LOG_LEVELS))}"
        )


def _check_boolean_vars(warnings: list[str]) -> None:
    """Validate boolean flags."""
    for var_name in ("SEMVOC_JSON_LOGS", "SEMVOC_PROGRESS"):
        raw = os.getenv(var_name)
        if raw is None:
            continue
        if raw.strip().lower() not in VALID_BOOLEANS:
            warnings.append(f"{var_name}={raw!r} is not a boolean")


def _check_profile(warnings: list[str]) -> None:
    """Validate SEMVOC_PROFILE names a known model profile."""
    raw = os.getenv("SEMVOC_PROFILE")
    if raw is None:
        return

    if raw.lower() not in VALID_PROFILES:
        warnings.append(
            f"SEMVOC_PROFILE={raw!r} is not a recognized profile. "
            f"Expected one of: {', '.join(sorted(VALID_PROFILES))}"
        )
