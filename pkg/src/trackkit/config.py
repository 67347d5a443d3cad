"""Pipeline configuration with strict JSON round-tripping.

Unknown keys are rejected at every nesting level; a typo in a
hyperparameter name is an error rather than a silent default.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field

from .errors import ConfigError
from .postprocess import MergeConfig
from .track import KalmanNoise, TrackerConfig


@dataclass(frozen=True)
class TtaConfig:
    iou_gate: float = 0.3
    area_ratio_bounds: tuple[float, float] = (0.5, 2.0)

    def __post_init__(self):
        lo, hi = self.area_ratio_bounds
        if not 0 < lo <= hi:
            raise ConfigError("area_ratio_bounds must satisfy 0 < lo <= hi")
        if not 0 <= self.iou_gate <= 1:
            raise ConfigError("iou_gate must lie in [0, 1]")


@dataclass(frozen=True)
class DenoiseConfig:
    window_size: int = 30_000
    tau: float = 2.5

    def __post_init__(self):
        if self.window_size < 1:
            raise ConfigError("window_size must be >= 1")
        if self.tau < 0:
            raise ConfigError("tau must be >= 0")


@dataclass(frozen=True)
class VoxelConfig:
    bins: int = 10
    polarity_mode: str = "signed"

    def __post_init__(self):
        if self.bins < 1:
            raise ConfigError("bins must be >= 1")
        if self.polarity_mode not in ("signed", "split"):
            raise ConfigError("polarity_mode must be 'signed' or 'split'")


@dataclass(frozen=True)
class EnhanceConfig:
    mode: str = "clahe"
    clip_limit: float = 2.0
    grid: tuple[int, int] = (8, 8)

    def __post_init__(self):
        if self.mode not in ("none", "he", "clahe"):
            raise ConfigError("enhance mode must be one of none, he, clahe")
        if not self.clip_limit > 0:
            raise ConfigError("clip_limit must be positive")
        if min(self.grid) < 1:
            raise ConfigError("grid dimensions must be >= 1")


@dataclass(frozen=True)
class SmoothConfig:
    dilate_iters: int = 4
    erode_iters: int = 3

    def __post_init__(self):
        if self.dilate_iters < 0 or self.erode_iters < 0:
            raise ConfigError("iteration counts must be >= 0")


@dataclass(frozen=True)
class MetricsConfig:
    match_iou: float = 0.5

    def __post_init__(self):
        if not 0 < self.match_iou <= 1:
            raise ConfigError("match_iou must lie in (0, 1]")


@dataclass(frozen=True)
class PipelineConfig:
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    merge: MergeConfig = field(default_factory=MergeConfig)
    nms_iou: float = 0.5
    tta: TtaConfig = field(default_factory=TtaConfig)
    smooth: SmoothConfig = field(default_factory=SmoothConfig)
    denoise: DenoiseConfig = field(default_factory=DenoiseConfig)
    voxel: VoxelConfig = field(default_factory=VoxelConfig)
    enhance: EnhanceConfig = field(default_factory=EnhanceConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def __post_init__(self):
        if not 0 <= self.nms_iou <= 1:
            raise ConfigError("nms_iou must lie in [0, 1]")

    def to_dict(self) -> dict:
        return _to_plain(self)

    @classmethod
    def from_dict(cls, data) -> "PipelineConfig":
        return _from_plain(cls, data, "config")


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [_to_plain(v) for v in obj]
    return obj


def _coerce(tp, value, path):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        return _from_plain(tp, value, path)
    if origin is tuple:
        args = typing.get_args(tp)
        if not isinstance(value, (list, tuple)) or len(value) != len(args):
            raise ConfigError(f"{path}: expected list of {len(args)} values")
        return tuple(_coerce(a, v, f"{path}[{k}]") for k, (a, v) in enumerate(zip(args, value)))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected boolean")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected string")
        return value
    return value


def _from_plain(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
    kwargs = {k: _coerce(hints[k], v, f"{path}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}") from None


__all__ = [
    "DenoiseConfig",
    "EnhanceConfig",
    "KalmanNoise",
    "MergeConfig",
    "MetricsConfig",
    "PipelineConfig",
    "SmoothConfig",
    "TrackerConfig",
    "TtaConfig",
    "VoxelConfig",
]
