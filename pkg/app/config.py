import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import logging

from pathlib import Path
from typing import Optional, Dict, Any
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.errors import ConfigError

# Configure logging
logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    # Logging Configuration
    log_level: str = "INFO"
    debug: bool = False

    # Run Configuration
    seed: int = 7
    jobs: int = 1

    # CRF Training Configuration
    crf_l2_lambda: float = 0.1
    crf_max_iterations: int = 200
    crf_convergence_tol: float = 1e-4

    # Logistic Training Configuration
    logistic_l2_lambda: float = 0.01
    logistic_max_iterations: int = 3000
    logistic_tol: float = 1e-5

    # Relevant Section Selection
    relevance_threshold: float = 0.5
    relevance_cap: int = 3

    # Entity Span Fallback
    span_fallback_min_probability: float = 0.3

    # Layout Feature Constants
    indent_quantum_pt: float = 18.0
    left_margin_fraction: float = 0.08

    # Rule Files
    rules_dir: str = "rules"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="SECTIONER_",
        extra="ignore",
    )


settings = Settings()


class RunConfig(BaseModel):
    """Options a subcommand may take from a config file; None means 'not set'."""

    model_config = ConfigDict(extra="forbid")

    seed: Optional[int] = None
    jobs: Optional[int] = Field(default=None, ge=1)
    docs: Optional[int] = Field(default=None, ge=1)
    mean_words: Optional[int] = Field(default=None, ge=1)
    header_prob: Optional[float] = None
    footer_prob: Optional[float] = None
    broken_span_prob: Optional[float] = None
    style_noise: Optional[float] = None
    groups: Optional[str] = None
    l2_lambda: Optional[float] = Field(default=None, ge=0.0)
    max_iterations: Optional[int] = Field(default=None, ge=1)
    convergence_tol: Optional[float] = Field(default=None, gt=0.0)
    logistic_l2_lambda: Optional[float] = Field(default=None, ge=0.0)
    windows: Optional[str] = None
    seeds: Optional[str] = None
    split: Optional[str] = None
    any_match: Optional[bool] = None
    rules: Optional[str] = None
    per_attribute: Optional[int] = Field(default=None, ge=1)

    def merged(self, overrides: Dict[str, Any]) -> "RunConfig":
        """Return a copy with every non-None override applied"""
        data = self.model_dump()
        data.update({key: value for key, value in overrides.items() if value is not None and key in data})
        try:
            return RunConfig(**data)
        except ValidationError as e:
            first = e.errors()[0]
            location = ".".join(str(part) for part in first["loc"])
            raise ConfigError(f"Invalid value: {first['msg']}", path=location)


def load_run_config(path: Optional[str], command: Optional[str] = None) -> RunConfig:
    """
    Load a TOML or JSON run config.

    Top-level keys are shared; a table named after the subcommand
    (e.g. ``[train-splitter]``) overrides them for that subcommand.
    """
    if not path:
        return RunConfig()

    config_path = Path(path)
    logger.debug(f"🔍 Loading run config from: {config_path}")
    try:
        raw = config_path.read_bytes()
    except OSError as e:
        raise ConfigError(f"Cannot read config file: {e}", path=str(config_path))

    try:
        if config_path.suffix == ".toml":
            data = tomllib.loads(raw.decode("utf-8"))
        elif config_path.suffix == ".json":
            data = json.loads(raw)
        else:
            raise ConfigError(f"Unsupported config format '{config_path.suffix}' (use .toml or .json)", path=str(config_path))
    except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"Malformed config file: {e}", path=str(config_path))

    if not isinstance(data, dict):
        raise ConfigError("Config file must hold a table/object", path=str(config_path))

    shared = {key: value for key, value in data.items() if not isinstance(value, dict)}
    section = data.get(command, {}) if command else {}
    if not isinstance(section, dict):
        raise ConfigError(f"Section '{command}' must be a table", path=str(config_path))
    shared.update(section)

    try:
        config = RunConfig(**shared)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise ConfigError(f"Invalid config value: {first['msg']}", path=f"{config_path}:{location}")

    logger.info(f"✅ Loaded run config {config_path} ({len(shared)} keys)")
    return config


def resolve_run_config(path: Optional[str], command: Optional[str], flags: Dict[str, Any]) -> RunConfig:
    """
    Flags over the config file over Settings defaults. Only the options
    every subcommand shares get a Settings default; the rest stay None.
    """
    defaults = RunConfig(
        seed=settings.seed,
        jobs=settings.jobs,
        l2_lambda=settings.crf_l2_lambda,
        max_iterations=settings.crf_max_iterations,
        convergence_tol=settings.crf_convergence_tol,
        rules=settings.rules_dir,
    )
    file_config = load_run_config(path, command)
    return defaults.merged(file_config.model_dump()).merged(flags)
