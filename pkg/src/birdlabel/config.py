"""Pipeline configuration: one INI-style file, strictly validated.

Unknown sections or keys are errors, and the file carries a schema_version so
stale configs fail loudly instead of running with silent defaults.
"""

from __future__ import annotations

import configparser
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path

from .features import FeatureParams
from .fetch import QueryFilter
from .segmentation import SegmentationParams

SCHEMA_VERSION = 1


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class ClusteringConfig:
    minpts_fraction: float = 0.10
    kneedle_sensitivity: float = 1.0

    def __post_init__(self):
        if not 0 < self.minpts_fraction < 1:
            raise ConfigError(f"minpts_fraction must be in (0, 1), got {self.minpts_fraction}")
        if self.kneedle_sensitivity <= 0:
            raise ConfigError("kneedle_sensitivity must be positive")


@dataclass(frozen=True)
class IoConfig:
    input_dir: str = ""
    output_dir: str = ""
    export_roi_wavs: bool = False
    excerpt_s: float = 0.0  # > 0: keep only this long an excerpt from the first ROI on


@dataclass(frozen=True)
class PipelineConfig:
    segmentation: SegmentationParams = field(default_factory=SegmentationParams)
    features: FeatureParams = field(default_factory=FeatureParams)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    io: IoConfig = field(default_factory=IoConfig)
    fetch: QueryFilter = field(default_factory=lambda: QueryFilter(species=""))


_SECTION_TYPES = {
    "segmentation": SegmentationParams,
    "features": FeatureParams,
    "clustering": ClusteringConfig,
    "io": IoConfig,
    "fetch": QueryFilter,
}


def _coerce(raw: str, target_type):
    if target_type is bool:
        lowered = raw.strip().lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    if target_type is str:
        return raw
    if target_type == tuple[str, ...]:
        return tuple(tok.strip() for tok in raw.split(",") if tok.strip())
    raise ConfigError(f"unsupported config field type: {target_type}")


def _parse_section(parser: configparser.ConfigParser, name: str, cls):
    hints = typing.get_type_hints(cls)
    known = {f.name: hints[f.name] for f in fields(cls)}
    kwargs = {}
    for key, raw in parser.items(name):
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in section [{name}]")
        kwargs[key] = _coerce(raw, known[key])
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid [{name}] section: {exc}") from exc


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep key case
    with open(path, "r", encoding="utf-8") as fh:
        parser.read_file(fh)
    if "pipeline" not in parser:
        raise ConfigError("missing [pipeline] section")
    pipeline_keys = dict(parser.items("pipeline"))
    unknown = set(pipeline_keys) - {"schema_version"}
    if unknown:
        raise ConfigError(f"unknown keys in [pipeline]: {sorted(unknown)}")
    version = pipeline_keys.get("schema_version")
    if version != str(SCHEMA_VERSION):
        raise ConfigError(
            f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})"
        )
    sections = {}
    for name in parser.sections():
        if name == "pipeline":
            continue
        if name not in _SECTION_TYPES:
            raise ConfigError(f"unknown section [{name}]")
        sections[name] = _parse_section(parser, name, _SECTION_TYPES[name])
    return PipelineConfig(**sections)


def save_config(config: PipelineConfig, path) -> None:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser["pipeline"] = {"schema_version": str(SCHEMA_VERSION)}
    for name, obj in (
        ("segmentation", config.segmentation),
        ("features", config.features),
        ("clustering", config.clustering),
        ("io", config.io),
        ("fetch", config.fetch),
    ):
        section = {}
        for f in fields(obj):
            value = getattr(obj, f.name)
            if isinstance(value, tuple):
                section[f.name] = ",".join(value)
            elif isinstance(value, bool):
                section[f.name] = "true" if value else "false"
            else:
                section[f.name] = str(value)
        parser[name] = section
    with open(path, "w", encoding="utf-8", newline="") as fh:
        parser.write(fh)
