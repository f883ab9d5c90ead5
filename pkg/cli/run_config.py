"""
Run Configuration.

Flat ``section.key = value`` config files merged with ``--set`` overrides
into one validated RunConfig. Unknown sections or keys are errors. The
effective config is echoed in the same format, so the echo reproduces the
run.
"""

import logging
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from model.config import ModelConfig, parse_model_values
from training.config import TrainConfig
from radar.scene import check_snr_db
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

ECHO_NAME = "config.echo"


class SimConfig(BaseModel):
    """Synthetic dataset settings."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    frames: int = Field(16, ge=1)
    seed: int = Field(0, ge=0)
    snr_db: float = 10.0
    min_targets: int = Field(1, ge=0)
    max_targets: int = Field(4, ge=0)

    @field_validator("snr_db")
    @classmethod
    def _finite_or_noiseless(cls, snr_db: float) -> float:
        return check_snr_db(snr_db)

    @model_validator(mode="after")
    def _check(self) -> "SimConfig":
        if self.min_targets > self.max_targets:
            raise ValueError(f"min_targets={self.min_targets} exceeds max_targets={self.max_targets}")
        return self


class BenchConfig(BaseModel):
    """Benchmark settings."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    frames: int = Field(100, ge=1)
    warmup: int = Field(10, ge=0)
    mode: Literal["batch", "streaming"] = "batch"
    measure: bool = True
    workers: int = Field(1, ge=1)


class RunConfig(BaseModel):
    """Every section of a run."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    sim: SimConfig = Field(default_factory=SimConfig)
    bench: BenchConfig = Field(default_factory=BenchConfig)

    def echo_text(self) -> str:
        """All effective keys, one ``section.key = value`` line each."""
        lines = ["# effective configuration"]
        for section in SECTIONS:
            for key, value in _kv(getattr(self, section)).items():
                lines.append(f"{section}.{key} = {value}")
        return "\n".join(lines) + "\n"

    def write_echo(self, run_dir: Union[str, Path]) -> Path:
        path = Path(run_dir) / ECHO_NAME
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.echo_text())
        logger.info(f"Wrote config echo to {path}")
        return path


SECTIONS = ("model", "train", "sim", "bench")


def _kv(section: BaseModel) -> Dict[str, str]:
    if isinstance(section, ModelConfig):
        return section.to_kv()
    out = {}
    for key, value in section.model_dump().items():
        if isinstance(value, bool):
            out[key] = "true" if value else "false"
        elif value is None:
            out[key] = "none"
        else:
            out[key] = str(value)
    return out


def parse_line(line: str, where: str) -> Optional[Tuple[str, str, str]]:
    """
    Parse one ``section.key = value`` line.

    Returns:
        (section, key, value), or None for blank and comment lines
    """
    text = line.split("#", 1)[0].strip()
    if not text:
        return None
    name, sep, value = text.partition("=")
    section, dot, key = name.strip().partition(".")
    if not sep or not dot or not key:
        raise ConfigError(f"{where}: expected 'section.key = value', got {line.strip()!r}")
    if section not in SECTIONS:
        raise ConfigError(f"{where}: unknown section {section!r} (expected one of {', '.join(SECTIONS)})")
    return section, key.strip(), value.strip()


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, Dict[str, str]]:
    """
    Parse a config file body.

    Raises:
        ConfigError: Malformed line, unknown section or duplicate key
    """
    values: Dict[str, Dict[str, str]] = {s: {} for s in SECTIONS}
    for number, line in enumerate(text.splitlines(), start=1):
        parsed = parse_line(line, f"{source}:{number}")
        if parsed is None:
            continue
        section, key, value = parsed
        if key in values[section]:
            raise ConfigError(f"{source}:{number}: duplicate key {section}.{key}")
        values[section][key] = value
    return values


def build_run_config(values: Dict[str, Dict[str, str]]) -> RunConfig:
    """Validate parsed strings into a RunConfig (fail-closed)."""
    try:
        return RunConfig(**{section: parse_model_values(values.get(section, {})) for section in SECTIONS})
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e


def load_run_config(path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = ()) -> RunConfig:
    """
    Read an optional config file and apply ``section.key=value`` overrides.

    Args:
        path: Config file; defaults only when None
        overrides: Command-line assignments, applied after the file

    Raises:
        ConfigError: Unreadable file, bad syntax, unknown or invalid keys
    """
    values: Dict[str, Dict[str, str]] = {s: {} for s in SECTIONS}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"Cannot read config file {path}: {e}") from e
        values = parse_config_text(text, str(path))
    for item in overrides:
        parsed = parse_line(item, "--set")
        if parsed is None:
            continue
        section, key, value = parsed
        values[section][key] = value
    return build_run_config(values)


def overridden_sections(overrides: Iterable[str]) -> List[str]:
    return sorted({item.split(".", 1)[0].strip() for item in overrides if "." in item})
