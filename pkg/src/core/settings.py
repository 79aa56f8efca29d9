import logging
import os
from dataclasses import dataclass, field, fields, replace
from typing import Any, Optional

import yaml
from dotenv import find_dotenv, load_dotenv

logger = logging.getLogger(__name__)

DEFAULT_SETTINGS_PATH = os.path.abspath(
    os.path.join(os.path.dirname(os.path.realpath(__file__)), "..", "..", "settings.yaml")
)
ENV_PREFIX = "GBENDERS"


@dataclass(frozen=True)
class LpTolerances:
    """
    Simplex tolerances and pivot limits. An LP is declared infeasible when
    its phase-one artificial sum stays above infeasibility.
    """

    feasibility: float = 1e-9
    infeasibility: float = 1e-7
    optimality: float = 1e-6
    pivot: float = 1e-11
    stall_limit: int = 50
    max_pivots: int = 20000


@dataclass(frozen=True)
class BnbSettings:
    integrality: float = 1e-6
    node_limit: int = 100000
    infeasible_leaf_weight: float = 1e4


@dataclass(frozen=True)
class BendersSettings:
    tol: float = 1e-6
    max_iters: int = 200
    big_m_slack: float = 1.1
    big_m_fallback: float = 1e7
    epsilon: float = 1e-5
    x_upper_default: float = 1e6
    workers: int = 1


@dataclass(frozen=True)
class OracleSettings:
    tol: float = 1e-8
    box_cap: int = 10000
    workers: int = 1


@dataclass(frozen=True)
class CliSettings:
    log_level: str = "INFO"
    show_progress: bool = False


@dataclass(frozen=True)
class Settings:
    """All settings sections, one attribute per section of settings.yaml."""

    lp: LpTolerances = field(default_factory=LpTolerances)
    bnb: BnbSettings = field(default_factory=BnbSettings)
    benders: BendersSettings = field(default_factory=BendersSettings)
    oracle: OracleSettings = field(default_factory=OracleSettings)
    cli: CliSettings = field(default_factory=CliSettings)

    def oracle_view(self) -> "Settings":
        """
        Settings for the brute-force verifiers: same code path, stricter
        integrality and optimality tolerances.
        """
        tol = self.oracle.tol
        return replace(
            self,
            lp=replace(self.lp, optimality=min(self.lp.optimality, tol)),
            bnb=replace(self.bnb, integrality=min(self.bnb.integrality, tol)),
        )


def _coerce(section: str, key: str, current: Any, raw: Any) -> Any:
    """Convert a YAML or environment value to the type of the default."""
    try:
        if isinstance(current, bool):
            if isinstance(raw, str):
                return raw.strip().lower() in ("1", "true", "yes", "on")
            return bool(raw)
        if isinstance(current, int):
            return int(float(raw))
        if isinstance(current, float):
            return float(raw)
        return str(raw)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"Invalid value {raw!r} for setting {section}.{key}") from exc


def _apply_section(section: str, base: Any, values: dict) -> Any:
    known = {f.name: f for f in fields(base)}
    updates = {}
    for key, raw in values.items():
        if key not in known:
            raise ValueError(f"Unknown setting {section}.{key}")
        updates[key] = _coerce(section, key, getattr(base, key), raw)
    return replace(base, **updates)


def _env_overrides(settings: Settings) -> dict:
    overrides: dict = {}
    for section in fields(settings):
        for item in fields(getattr(settings, section.name)):
            name = f"{ENV_PREFIX}_{section.name}_{item.name}".upper()
            if name in os.environ:
                overrides.setdefault(section.name, {})[item.name] = os.environ[name]
    return overrides


def load_settings(path: Optional[str] = None, use_env: bool = True) -> Settings:
    """
    Loads solver settings from YAML and the environment.

    Args:
        path (str, optional): YAML file; the repository settings.yaml when
        omitted. A missing default file yields the built-in defaults.
        use_env (bool): Apply GBENDERS_<SECTION>_<KEY> overrides (a .env
        file in the working directory is loaded first).

    Returns:
        Settings: The merged, immutable settings.
    """
    settings = Settings()
    source = path or DEFAULT_SETTINGS_PATH
    if os.path.isfile(source):
        with open(source, "r", encoding="utf-8") as handle:
            document = yaml.safe_load(handle) or {}
        if not isinstance(document, dict):
            raise ValueError(f"Settings file {source} must contain a mapping")
        settings = merge_settings(settings, document)
    elif path is not None:
        raise FileNotFoundError(f"Settings file {path} does not exist")

    if use_env:
        load_dotenv(find_dotenv(usecwd=True))
        overrides = _env_overrides(settings)
        if overrides:
            logger.debug("Environment overrides: %s", overrides)
            settings = merge_settings(settings, overrides)
    return settings


def merge_settings(settings: Settings, document: dict) -> Settings:
    """Returns a copy of settings with the nested mapping applied."""
    updates = {}
    sections = {f.name for f in fields(settings)}
    for section, values in document.items():
        if section not in sections:
            raise ValueError(f"Unknown settings section {section}")
        if not isinstance(values, dict):
            raise ValueError(f"Settings section {section} must be a mapping")
        updates[section] = _apply_section(section, getattr(settings, section), values)
    return replace(settings, **updates)
