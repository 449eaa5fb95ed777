"""Deployment configuration: JSON file with sections {storage, weights, drift,
lifecycle, llm_client, privacy}, overridable via FEEDLOOP_<SECTION>_<FIELD>
environment variables."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigError
from .feedback import ActionWeights

ENV_PREFIX = "FEEDLOOP_"


@dataclass
class StorageConfig:
    log_path: str = "feedloop-log.jsonl"
    fsync_every: int = 1  # fsync after every N appended records
    state_snapshot_path: Optional[str] = None  # optional replay accelerator


@dataclass
class DriftConfig:
    tau_jsd: float = 0.2
    tau_oov: float = 0.3
    window_messages: int = 1000
    window_days: int = 7


@dataclass
class LifecycleConfig:
    promotion_margin: float = 0.0  # strict improvement by default
    min_new_gold: int = 200
    retrain_schedule_days: int = 7
    review_threshold: float = 0.9
    hotfix_monitor_days: int = 7
    split_train: float = 0.7
    split_validation: float = 0.15
    split_test: float = 0.15
    serving_pathway: str = "FT"

    @property
    def split_ratios(self) -> tuple[float, float, float]:
        return (self.split_train, self.split_validation, self.split_test)


@dataclass
class LlmClientConfig:
    endpoint: Optional[str] = None  # the only permitted external call, off by default
    auth_token: Optional[str] = None
    mock_script: Optional[str] = None  # JSONL fixture for the deterministic mock
    mock_cycle: bool = False
    timeout: float = 30.0
    max_in_flight: int = 2
    default_confidence: float = 0.75


@dataclass
class PrivacyConfig:
    implicit_tracking: bool = False  # explicit opt-in per deployment
    user_salt: str = "feedloop"  # pseudonymization salt; raw ids never hit the log
    api_token: Optional[str] = None  # static bearer token, unset = open
    retention_days: Optional[int] = None  # implicit-event retention, None = unlimited


@dataclass
class Config:
    storage: StorageConfig = field(default_factory=StorageConfig)
    weights: ActionWeights = field(default_factory=ActionWeights)
    drift: DriftConfig = field(default_factory=DriftConfig)
    lifecycle: LifecycleConfig = field(default_factory=LifecycleConfig)
    llm_client: LlmClientConfig = field(default_factory=LlmClientConfig)
    privacy: PrivacyConfig = field(default_factory=PrivacyConfig)


_SECTIONS = {
    "storage": StorageConfig,
    "weights": ActionWeights,
    "drift": DriftConfig,
    "lifecycle": LifecycleConfig,
    "llm_client": LlmClientConfig,
    "privacy": PrivacyConfig,
}


def _coerce(raw: str, target_type: Any, name: str) -> Any:
    try:
        if target_type is bool:
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"cannot parse {name}={raw!r} as {target_type}") from exc


def _base_type(f: dataclasses.Field) -> Any:
    # Optional[X] fields coerce as X; plain annotations pass through.
    t = f.type
    mapping = {"int": int, "float": float, "bool": bool, "str": str}
    if isinstance(t, str):
        t = t.replace("Optional[", "").rstrip("]")
        return mapping.get(t, str)
    return t


def _build_section(cls: Any, data: dict[str, Any], section: str) -> Any:
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    return cls(**data)


def load_config(path: Optional[str | Path] = None, env: Optional[dict[str, str]] = None) -> Config:
    """Load configuration from an optional JSON file, then apply environment
    overrides of the form FEEDLOOP_<SECTION>_<FIELD>."""
    data: dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        unknown = set(data) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    sections = {}
    for name, cls in _SECTIONS.items():
        sections[name] = _build_section(cls, data.get(name, {}), name)
    config = Config(**sections)

    env = dict(os.environ if env is None else env)
    for key, raw in sorted(env.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        remainder = key[len(ENV_PREFIX):].lower()
        for section_name, cls in _SECTIONS.items():
            prefix = f"{section_name}_"
            if not remainder.startswith(prefix):
                continue
            field_name = remainder[len(prefix):]
            fields = {f.name: f for f in dataclasses.fields(cls)}
            if field_name not in fields:
                raise ConfigError(f"unknown override {key}")
            section = getattr(config, section_name)
            value = _coerce(raw, _base_type(fields[field_name]), key)
            if dataclasses.is_dataclass(section) and getattr(cls, "__dataclass_params__").frozen:
                section = dataclasses.replace(section, **{field_name: value})
                setattr(config, section_name, section)
            else:
                setattr(section, field_name, value)
            break
        else:
            raise ConfigError(f"unknown override {key}")
    return config
