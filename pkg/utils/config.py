from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field
from typing import Any, Dict, Optional, Tuple
from pathlib import Path
import json
from functools import lru_cache

from utils.errors import ConfigurationError

class Settings(BaseSettings):
    """Application settings with environment variable support"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )

    # Environment
    ENVIRONMENT: str = Field(default="development")

    # Logging
    LOG_LEVEL: str = Field(default="INFO")
    LOG_FORMAT: str = Field(default="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
    LOG_JSON: bool = Field(default=False)

    # Hilbert space construction
    MAX_DIMENSION: int = Field(default=4096, ge=2)
    HERMITICITY_TOLERANCE: float = Field(default=1e-12, gt=0)
    FOCK_TAIL_TOLERANCE: float = Field(default=1e-6, gt=0, lt=1)

    # Correlation functions
    DEGENERACY_RELATIVE_TOLERANCE: float = Field(default=1e-10, gt=0)
    DEFAULT_TIME_POINTS: int = Field(default=2048, ge=64)
    DEFAULT_PERIODS: float = Field(default=20.0, gt=0)
    MAX_TIME: float = Field(default=1000.0, gt=0)
    AVERAGING_SPANS: float = Field(default=400.0, gt=0)
    MAX_AVERAGING_POINTS: int = Field(default=400_000, ge=1024)
    WEIGHT_CUTOFF: float = Field(default=1e-18, ge=0)  # relative to total weight
    PARTICIPATION_THRESHOLD: float = Field(default=1e-3, gt=0, lt=1)

    # Davies diagnostic
    DAVIES_DOUBLING_TOLERANCE: float = Field(default=0.01, gt=0)
    DAVIES_GROWTH_EXPONENT: float = Field(default=0.5, gt=0)

    # Master equations
    HALF_FOURIER_DECAY_TOLERANCE: float = Field(default=1e-8, gt=0)
    MAX_STEP_PHASE: float = Field(default=0.1, gt=0)
    PLATEAU_TOLERANCE: float = Field(default=1e-5, gt=0)
    BOHR_FREQUENCY_TOLERANCE: float = Field(default=1e-10, gt=0)

    # Fitting
    FIT_MULTI_STARTS: int = Field(default=3, ge=1)
    FIT_MAX_EVALUATIONS: int = Field(default=20000, ge=100)
    FIT_SUBSEED: int = Field(default=2024)

    # Workflow processing
    MAX_WORKERS: Optional[int] = Field(default=None, ge=1)
    OUTPUT_DIR: str = Field(default="./results")
    SCHEMA_VERSION: str = Field(default="1.0")

@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance"""
    return Settings()

# Experiment configuration files

def _parse_value(raw: str) -> Any:
    """Interpret a right-hand side as a JSON scalar/list, falling back to text"""
    text = raw.strip()
    if not text:
        return ""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    lowered = text.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    if "," in text:
        return [_parse_value(part) for part in text.split(",")]
    if len(text) >= 2 and text[0] == text[-1] and text[0] in ("'", '"'):
        return text[1:-1]
    return text

def parse_key_value_text(text: str, source: str = "<config>") -> Tuple[Dict[str, Any], Dict[str, int]]:
    """
    Parse flat ``key = value`` text.

    Returns the parameter mapping and the line number of every key so later
    validation errors can point at the offending line.
    """
    values: Dict[str, Any] = {}
    lines: Dict[str, int] = {}

    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(
                f"{source}, line {number}: expected 'key = value', got {raw_line.strip()!r}",
                line=number,
            )
        key, raw_value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise ConfigurationError(f"{source}, line {number}: empty key", line=number)
        if key in values:
            raise ConfigurationError(
                f"{source}, line {number}: duplicate key '{key}' (first set on line {lines[key]})",
                key=key,
                line=number,
            )
        values[key] = _parse_value(raw_value)
        lines[key] = number

    return values, lines

def load_experiment_config(path: str) -> Tuple[Dict[str, Any], Dict[str, int]]:
    """Load an experiment configuration file (key = value text or JSON)"""
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigurationError(f"Configuration file not found: {path}")

    text = config_path.read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        try:
            document = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path}, line {e.lineno}: invalid JSON ({e.msg})", line=e.lineno)
        if not isinstance(document, dict):
            raise ConfigurationError(f"{path}: top-level JSON value must be an object")
        nested = [key for key, value in document.items() if isinstance(value, dict)]
        if nested:
            raise ConfigurationError(f"{path}: configuration must be flat, nested key '{nested[0]}'", key=nested[0])
        return {key.replace("-", "_"): value for key, value in document.items()}, {}

    return parse_key_value_text(text, source=str(path))
