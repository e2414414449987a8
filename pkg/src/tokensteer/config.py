"""Service configuration: JSON file plus environment overrides.

Environment variables named TOKENSTEER_<FIELD> (nested fields joined with
underscores, e.g. TOKENSTEER_COMPLETION_BASE_URL) override file values.
Validation happens once at startup and aborts with a field-precise message.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError, InvalidDistributionError
from .model import GenerationParams
from .uncertainty import HighlightConfig

ENV_PREFIX = "TOKENSTEER_"

ANALYZER_MODES = ("remote", "heuristic")


@dataclass
class BackendSettings:
    base_url: str = ""
    api_key_env: str = ""
    endpoint: str = ""


@dataclass
class ServiceConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8707
    completion: BackendSettings = field(default_factory=BackendSettings)
    analysis: BackendSettings = field(default_factory=BackendSettings)
    analyzer_mode: str = "heuristic"
    scripted_dir: str = ""
    max_tokens: int = 128
    temperature: float = 0.0
    top_k: int = 10
    n_samples: int = 10
    regeneration_temperature: float = 0.8
    completion_timeout: float = 30.0
    preview_timeout: float = 10.0
    fanout_cap: int = 4
    assessment_cap: int = 6
    alpha: float = 0.05
    beta: float = 0.5
    tau: float = 0.25
    h_max: float = 1.4
    log_dir: str = "logs"
    summary_columns: int = 60
    prompt_path: str = ""

    def generation_params(self) -> GenerationParams:
        return GenerationParams(
            max_tokens=self.max_tokens,
            temperature=self.temperature,
            top_k=self.top_k,
            n_samples=self.n_samples,
        )

    def highlight_config(self) -> HighlightConfig:
        try:
            return HighlightConfig(
                alpha=self.alpha, beta=self.beta, tau=self.tau, h_max=self.h_max
            )
        except InvalidDistributionError as exc:
            raise ConfigError("highlight", str(exc)) from exc

    def validate(self) -> "ServiceConfig":
        if not 1 <= self.listen_port <= 65535:
            raise ConfigError("listen_port", f"{self.listen_port} outside [1, 65535]")
        if self.analyzer_mode not in ANALYZER_MODES:
            raise ConfigError(
                "analyzer_mode", f"{self.analyzer_mode!r} not one of {ANALYZER_MODES}"
            )
        if self.analyzer_mode == "remote" and not self.analysis.base_url:
            raise ConfigError("analysis.base_url", "required when analyzer_mode=remote")
        if not self.scripted_dir and not self.completion.base_url:
            raise ConfigError(
                "completion.base_url", "required unless scripted_dir is set"
            )
        if self.top_k < 2:
            raise ConfigError("top_k", f"must be >= 2, got {self.top_k}")
        if self.max_tokens < 1:
            raise ConfigError("max_tokens", f"must be >= 1, got {self.max_tokens}")
        if self.n_samples < 1:
            raise ConfigError("n_samples", f"must be >= 1, got {self.n_samples}")
        if self.temperature < 0:
            raise ConfigError("temperature", f"must be >= 0, got {self.temperature}")
        if self.regeneration_temperature < 0:
            raise ConfigError(
                "regeneration_temperature",
                f"must be >= 0, got {self.regeneration_temperature}",
            )
        for name in ("completion_timeout", "preview_timeout"):
            if getattr(self, name) <= 0:
                raise ConfigError(name, f"must be > 0, got {getattr(self, name)}")
        for name in ("fanout_cap", "assessment_cap"):
            if getattr(self, name) < 1:
                raise ConfigError(name, f"must be >= 1, got {getattr(self, name)}")
        if self.summary_columns < 4:
            raise ConfigError("summary_columns", f"must be >= 4, got {self.summary_columns}")
        self.highlight_config()
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def _coerce(field_type, value: str, field_name: str):
    try:
        if field_type is int:
            return int(value)
        if field_type is float:
            return float(value)
        return value
    except ValueError as exc:
        raise ConfigError(field_name, f"cannot parse {value!r}: {exc}") from exc


def _apply_env(cfg: ServiceConfig, environ: dict[str, str]) -> None:
    for f in fields(ServiceConfig):
        if f.type == "BackendSettings" or isinstance(getattr(cfg, f.name), BackendSettings):
            backend = getattr(cfg, f.name)
            for bf in fields(BackendSettings):
                env_name = f"{ENV_PREFIX}{f.name.upper()}_{bf.name.upper()}"
                if env_name in environ:
                    setattr(backend, bf.name, environ[env_name])
            continue
        env_name = f"{ENV_PREFIX}{f.name.upper()}"
        if env_name in environ:
            current = getattr(cfg, f.name)
            setattr(cfg, f.name, _coerce(type(current), environ[env_name], f.name))


def load_config(
    path: str | Path | None = None, environ: dict[str, str] | None = None
) -> ServiceConfig:
    """Build a validated config from an optional JSON file plus environment."""
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config_file", f"cannot read {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config_file", "top level must be a JSON object")

    cfg = ServiceConfig()
    known = {f.name for f in fields(ServiceConfig)}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(key, "unknown configuration field")
        if key in ("completion", "analysis"):
            if not isinstance(value, dict):
                raise ConfigError(key, "must be an object")
            backend = getattr(cfg, key)
            for bkey, bval in value.items():
                if bkey not in {bf.name for bf in fields(BackendSettings)}:
                    raise ConfigError(f"{key}.{bkey}", "unknown configuration field")
                setattr(backend, bkey, bval)
        else:
            current = getattr(cfg, key)
            if isinstance(current, bool) or not isinstance(
                value, (type(current), int) if isinstance(current, float) else type(current)
            ):
                raise ConfigError(key, f"expected {type(current).__name__}, got {value!r}")
            setattr(cfg, key, float(value) if isinstance(current, float) else value)

    _apply_env(cfg, environ if environ is not None else dict(os.environ))
    return cfg.validate()
