"""Run configuration: defaults, the JSON config file, and validation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .budget import CounterKind, DropTarget, TokenCounter
from .gateway import BackendEndpoint, Role


class ConfigError(Exception):
    """Invalid or inconsistent run configuration; maps to exit code 1."""


@dataclass(frozen=True, slots=True)
class DropSpec:
    target: DropTarget
    rate: float

    def __post_init__(self):
        if not (0 <= self.rate < 1):
            raise ConfigError(f"drop rate must lie in [0, 1), got {self.rate}")

    @property
    def label(self) -> str:
        return f"drop-{self.target.value}-{self.rate:g}"


@dataclass(frozen=True, slots=True)
class RunConfig:
    manifest_path: str
    endpoints: dict[Role, BackendEndpoint]
    output_dir: str
    cache_root: str
    counter: TokenCounter = field(default_factory=TokenCounter)
    context_limit: int = 8192
    initial_clip_length: float = 1.0
    # Set to pin the clip length; the adaptive loop is disabled then.
    fixed_clip_length: float | None = None
    drop_spec: DropSpec | None = None
    time_aware: bool = True
    max_in_flight: int = 64
    temperature: float = 1.0
    resume: bool = False
    # Per-question failures tolerated before the run exits with code 2.
    failure_budget: int = 0

    def __post_init__(self):
        if self.context_limit <= 0:
            raise ConfigError("context_limit must be positive")
        if self.initial_clip_length <= 0:
            raise ConfigError("initial_clip_length must be positive")
        if self.fixed_clip_length is not None and self.fixed_clip_length <= 0:
            raise ConfigError("fixed_clip_length must be positive")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be at least 1")
        if self.failure_budget < 0:
            raise ConfigError("failure_budget must be non-negative")
        for role in (Role.CAPTIONER, Role.ASR, Role.LLM):
            if role not in self.endpoints:
                raise ConfigError(f"missing endpoint for role {role.value!r}")
        for role, ep in self.endpoints.items():
            if ep.role is not role:
                raise ConfigError(f"endpoint registered under {role.value!r} has role {ep.role.value!r}")

    @property
    def variant_label(self) -> str:
        if self.drop_spec is not None:
            return self.drop_spec.label
        if self.fixed_clip_length is not None:
            return f"fixed-{self.fixed_clip_length:g}"
        return "adaptive"


def _endpoint_from_record(role: Role, record: dict) -> BackendEndpoint:
    if not isinstance(record, dict):
        raise ConfigError(f"endpoint for {role.value!r} must be an object")
    unknown = set(record) - {"base_url", "model_name", "auth_token_env", "timeout", "max_retries"}
    if unknown:
        raise ConfigError(f"endpoint for {role.value!r} has unknown fields {sorted(unknown)}")
    try:
        return BackendEndpoint(
            role=role,
            base_url=record["base_url"],
            model_name=record["model_name"],
            auth_token_env=record.get("auth_token_env"),
            timeout=record.get("timeout", 120.0),
            max_retries=record.get("max_retries", 3),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"endpoint for {role.value!r}: {exc}") from exc


_CONFIG_FIELDS = {
    "manifest_path",
    "endpoints",
    "output_dir",
    "cache_root",
    "counter",
    "context_limit",
    "initial_clip_length",
    "fixed_clip_length",
    "drop",
    "time_aware",
    "max_in_flight",
    "temperature",
    "resume",
    "failure_budget",
}


def config_from_record(record: dict, base_dir: Path | None = None) -> RunConfig:
    """Build a RunConfig from a parsed JSON object. Relative paths resolve
    against base_dir (the config file's directory) when given."""
    if not isinstance(record, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(record) - _CONFIG_FIELDS
    if unknown:
        raise ConfigError(f"unknown config fields {sorted(unknown)}")
    missing = {"manifest_path", "endpoints", "output_dir", "cache_root"} - set(record)
    if missing:
        raise ConfigError(f"missing config fields {sorted(missing)}")

    def resolve(path: str) -> str:
        if base_dir is not None and not Path(path).is_absolute():
            return str(base_dir / path)
        return path

    endpoints_raw = record["endpoints"]
    if not isinstance(endpoints_raw, dict):
        raise ConfigError("endpoints must be an object keyed by role")
    endpoints: dict[Role, BackendEndpoint] = {}
    for role_name, ep_record in endpoints_raw.items():
        try:
            role = Role(role_name)
        except ValueError:
            raise ConfigError(f"unknown endpoint role {role_name!r}") from None
        endpoints[role] = _endpoint_from_record(role, ep_record)

    counter_raw = record.get("counter", {"kind": CounterKind.HEURISTIC_CHAR_QUARTER.value})
    try:
        counter = TokenCounter(
            kind=CounterKind(counter_raw.get("kind", CounterKind.HEURISTIC_CHAR_QUARTER.value)),
            vocabulary_uri=(
                resolve(counter_raw["vocabulary_uri"]) if counter_raw.get("vocabulary_uri") else None
            ),
        )
    except (AttributeError, ValueError) as exc:
        raise ConfigError(f"counter: {exc}") from exc

    drop_raw = record.get("drop")
    drop_spec = None
    if drop_raw is not None:
        try:
            drop_spec = DropSpec(target=DropTarget(drop_raw["target"]), rate=float(drop_raw["rate"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"drop: {exc}") from exc

    if record.get("fixed_clip_length") is not None and record.get("initial_clip_length") is not None:
        raise ConfigError("fixed_clip_length and initial_clip_length are mutually exclusive")
    initial_clip_length = record.get("initial_clip_length")
    if initial_clip_length is None:
        initial_clip_length = 1.0

    try:
        return RunConfig(
            manifest_path=resolve(record["manifest_path"]),
            endpoints=endpoints,
            output_dir=resolve(record["output_dir"]),
            cache_root=resolve(record["cache_root"]),
            counter=counter,
            context_limit=record.get("context_limit", 8192),
            initial_clip_length=initial_clip_length,
            fixed_clip_length=record.get("fixed_clip_length"),
            drop_spec=drop_spec,
            time_aware=record.get("time_aware", True),
            max_in_flight=record.get("max_in_flight", 64),
            temperature=record.get("temperature", 1.0),
            resume=record.get("resume", False),
            failure_budget=record.get("failure_budget", 0),
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        record = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_record(record, base_dir=path.parent)


def config_snapshot(config: RunConfig) -> dict:
    """JSON-serializable echo of the effective configuration."""
    return {
        "manifest_path": config.manifest_path,
        "endpoints": {
            role.value: {
                "base_url": ep.base_url,
                "model_name": ep.model_name,
                "auth_token_env": ep.auth_token_env,
                "timeout": ep.timeout,
                "max_retries": ep.max_retries,
            }
            for role, ep in sorted(config.endpoints.items(), key=lambda item: item[0].value)
        },
        "output_dir": config.output_dir,
        "cache_root": config.cache_root,
        "counter": {"kind": config.counter.kind.value, "vocabulary_uri": config.counter.vocabulary_uri},
        "context_limit": config.context_limit,
        "initial_clip_length": config.initial_clip_length,
        "fixed_clip_length": config.fixed_clip_length,
        "drop": (
            {"target": config.drop_spec.target.value, "rate": config.drop_spec.rate}
            if config.drop_spec
            else None
        ),
        "time_aware": config.time_aware,
        "max_in_flight": config.max_in_flight,
        "temperature": config.temperature,
        "resume": config.resume,
        "failure_budget": config.failure_budget,
    }


def derive_variant(base: RunConfig, spec: str) -> RunConfig:
    """Derive an ablation variant from a spec string.

    Forms: "adaptive", "fixed:<seconds>", "drop:<target>:<rate>". Output
    goes to a variant subdirectory of the base output_dir.
    """
    parts = spec.split(":")
    try:
        if parts == ["adaptive"]:
            variant = replace(base, fixed_clip_length=None, drop_spec=None)
        elif parts[0] == "fixed" and len(parts) == 2:
            variant = replace(base, fixed_clip_length=float(parts[1]), drop_spec=None)
        elif parts[0] == "drop" and len(parts) == 3:
            variant = replace(base, drop_spec=DropSpec(target=DropTarget(parts[1]), rate=float(parts[2])))
        else:
            raise ConfigError(f"unrecognized variant spec {spec!r}")
    except ValueError as exc:
        raise ConfigError(f"variant spec {spec!r}: {exc}") from exc
    return replace(variant, output_dir=str(Path(base.output_dir) / variant.variant_label))
