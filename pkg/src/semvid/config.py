"""Run configuration: sectioned YAML with strict keys and flag overrides.

Unknown keys are rejected so typos can never silently change an experiment.
Every command echoes the fully resolved configuration into its run manifest.
The output directory can be redirected globally with the
``SEMVID_OUTPUT_ROOT`` environment variable.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields

import yaml

from .errors import ConfigError

OUTPUT_ROOT_ENV = "SEMVID_OUTPUT_ROOT"


@dataclass
class SyntheticSection:
    seed: int = 0
    n_gops: int = 24
    gop_size: int = 5
    dims: tuple[int, int] = (32, 32)
    static: bool = False


@dataclass
class DataSection:
    path: str | None = None
    synthetic: SyntheticSection | None = None
    gop_size: int = 5
    crop: tuple[int, int] | None = None
    train_fraction: float = 5.0 / 6.0


@dataclass
class ModelSection:
    profile: str = "tiny"
    codec_width: int = 32
    coder_width: int = 32
    offset_channels: int = 16
    history_window: int = 3
    seed: int = 0
    checkpoint: str | None = None
    checkpoints: list[str] = field(default_factory=list)  # for cbr sweeps


@dataclass
class RatesSection:
    target_cbr: float = 0.0625
    ratio: str = "1:1"


@dataclass
class ChannelSection:
    snr_db: float = 10.0
    sweep: list[float] = field(default_factory=lambda: [0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0])
    seed: int = 1234


@dataclass
class TrainSection:
    steps: int = 2000
    lr_start: float = 1e-4
    lr_end: float = 2e-5
    batch_size: int = 1
    snr_range_db: tuple[float, float] = (0.0, 15.0)
    seed: int = 0
    checkpoint_every: int = 500


@dataclass
class BaselineSection:
    code_file: str | None = None
    code_n: int = 4096
    code_seed: int = 1
    col_weight: int = 3
    row_weight: int = 6
    constellation: int = 16
    quality: int = 6
    max_iters: int = 50
    interleaver_seed: int = 0x1EAF


@dataclass
class OutputSection:
    dir: str = "runs"


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    rates: RatesSection = field(default_factory=RatesSection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    train: TrainSection = field(default_factory=TrainSection)
    baseline: BaselineSection = field(default_factory=BaselineSection)
    output: OutputSection = field(default_factory=OutputSection)

    def output_dir(self) -> str:
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root:
            return os.path.join(root, self.output.dir)
        return self.output.dir

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_TUPLE_FIELDS = {"dims", "crop", "snr_range_db"}


def _fill_dataclass(cls, payload: dict, path: str):
    if not isinstance(payload, dict):
        raise ConfigError(f"section {path!r} must be a mapping, got {type(payload).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(payload) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in section {path!r}")
    kwargs = {}
    for name, value in payload.items():
        if name == "synthetic" and value is not None:
            value = _fill_dataclass(SyntheticSection, value, f"{path}.synthetic")
        elif name in _TUPLE_FIELDS and value is not None:
            if not isinstance(value, (list, tuple)) or len(value) != 2:
                raise ConfigError(f"{path}.{name} must be a pair, got {value!r}")
            value = tuple(value)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"invalid section {path!r}: {exc}") from exc


_SECTIONS = {
    "data": DataSection,
    "model": ModelSection,
    "rates": RatesSection,
    "channel": ChannelSection,
    "train": TrainSection,
    "baseline": BaselineSection,
    "output": OutputSection,
}


def config_from_dict(payload: dict) -> RunConfig:
    if payload is None:
        payload = {}
    if not isinstance(payload, dict):
        raise ConfigError("configuration root must be a mapping")
    unknown = set(payload) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown configuration section(s): {sorted(unknown)}")
    kwargs = {
        name: _fill_dataclass(cls, payload[name], name)
        for name, cls in _SECTIONS.items()
        if name in payload
    }
    return RunConfig(**kwargs)


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = yaml.safe_load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path!r}: {exc}") from exc
    return config_from_dict(payload)


def apply_overrides(config: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply ``section.key=value`` strings (values parsed as YAML scalars)."""
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        parts = key.strip().split(".")
        if len(parts) < 2:
            raise ConfigError(f"override key {key!r} must be section.key")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse override value {raw!r}: {exc}") from exc
        target = config
        for part in parts[:-1]:
            if not hasattr(target, part):
                raise ConfigError(f"unknown override section {part!r} in {key!r}")
            nxt = getattr(target, part)
            if nxt is None and part == "synthetic":
                nxt = SyntheticSection()
                target.synthetic = nxt
            target = nxt
        leaf = parts[-1]
        if not dataclasses.is_dataclass(target) or leaf not in {
            f.name for f in fields(target)
        }:
            raise ConfigError(f"unknown override key {key!r}")
        if leaf in _TUPLE_FIELDS and value is not None:
            if not isinstance(value, (list, tuple)) or len(value) != 2:
                raise ConfigError(f"override {key!r} must be a pair, got {value!r}")
            value = tuple(value)
        setattr(target, leaf, value)
    return config
