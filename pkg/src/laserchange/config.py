"""Pipeline configuration: TOML file loading, validation, and overrides.

One flat schema covers the whole parameter surface. Every default mirrors
the constant in the module that consumes it, so an empty config file (or no
file at all) reproduces the library defaults exactly. Unknown sections and
unknown keys are rejected rather than ignored: a typo in a config file
should fail loudly, not silently run with defaults.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - 3.10 fallback
    import tomli as tomllib

from .render import (
    EQUIRECT,
    MAX_HUE_RANGE,
    PINHOLE,
    CameraIntrinsics,
    equirect_intrinsics,
    intrinsics_from_fov,
    vehicle_to_camera,
)
from .geom import Pose
from .prompting import (
    COMPONENT_RADIUS,
    NN_DIST_THRESHOLD,
    NOISE_FLOOR,
)
from .segment import TAU_RANGE, TAU_INTENSITY
from .detect import IOU_THRESHOLD, VERIFY_DIST, VERIFY_FRACTION

__all__ = [
    "CameraConfig",
    "PromptingConfig",
    "SegmenterConfig",
    "DetectionConfig",
    "CorridorConfig",
    "PipelineConfig",
    "ConfigError",
    "load_config",
    "parse_config",
    "apply_overrides",
    "METHOD_PIXEL_PROMPTS",
    "METHOD_3D_PROMPTS",
]

METHOD_PIXEL_PROMPTS = "pixel_diff"
METHOD_3D_PROMPTS = "diff_3d"

SEGMENTER_REFERENCE = "reference"
SEGMENTER_BRIDGE = "bridge"


class ConfigError(ValueError):
    """Raised for malformed, out-of-range, or unknown configuration."""


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


@dataclass(frozen=True)
class CameraConfig:
    """Virtual camera geometry plus the colorization range scale."""

    width: int = 256
    height: int = 128
    fov_h_deg: float = 90.0
    fov_v_deg: float = 45.0
    model: str = PINHOLE
    # Row-major 3x4 [R|t] mapping vehicle coordinates into camera coordinates.
    t_cv: Tuple[float, ...] = tuple(vehicle_to_camera().to_values())
    max_hue_range: float = MAX_HUE_RANGE

    def __post_init__(self) -> None:
        _require(self.width >= 2 and self.height >= 2, "camera.width/height must be >= 2")
        _require(self.model in (PINHOLE, EQUIRECT),
                 f"camera.model must be '{PINHOLE}' or '{EQUIRECT}'")
        hi = 360.0 if self.model == EQUIRECT else 180.0
        _require(0.0 < self.fov_h_deg <= hi, f"camera.fov_h_deg must be in (0, {hi:g}]")
        _require(0.0 < self.fov_v_deg < 180.0, "camera.fov_v_deg must be in (0, 180)")
        _require(len(self.t_cv) == 12, "camera.t_cv needs 12 numbers (row-major 3x4)")
        try:
            Pose.from_values(self.t_cv)
        except Exception as exc:
            raise ConfigError(f"camera.t_cv is not a rigid transform: {exc}") from exc
        _require(self.max_hue_range > 0.0, "camera.max_hue_range must be positive")

    def intrinsics(self) -> CameraIntrinsics:
        fov_h = math.radians(self.fov_h_deg)
        fov_v = math.radians(self.fov_v_deg)
        if self.model == EQUIRECT:
            return equirect_intrinsics(self.width, self.height, fov_h, fov_v)
        return intrinsics_from_fov(self.width, self.height, fov_h, fov_v)

    def vehicle_to_camera(self) -> Pose:
        return Pose.from_values(self.t_cv)


@dataclass(frozen=True)
class PromptingConfig:
    """Prompt generation: shared knobs plus the per-route ones."""

    method: str = METHOD_3D_PROMPTS
    k: int = 5
    min_dist: float = 16.0
    noise_floor: float = NOISE_FLOOR
    nn_threshold: float = NN_DIST_THRESHOLD
    component_radius: float = COMPONENT_RADIUS
    w_range: float = 1.0
    w_intensity: float = 1.0

    def __post_init__(self) -> None:
        _require(self.method in (METHOD_PIXEL_PROMPTS, METHOD_3D_PROMPTS),
                 f"prompting.method must be '{METHOD_PIXEL_PROMPTS}' or '{METHOD_3D_PROMPTS}'")
        _require(self.k >= 1, "prompting.k must be >= 1")
        _require(self.min_dist >= 0.0, "prompting.min_dist must be non-negative")
        _require(self.noise_floor >= 0.0, "prompting.noise_floor must be non-negative")
        _require(self.nn_threshold > 0.0, "prompting.nn_threshold must be positive")
        _require(self.component_radius > 0.0, "prompting.component_radius must be positive")
        _require(self.w_range >= 0.0 and self.w_intensity >= 0.0,
                 "prompting weights must be non-negative")


@dataclass(frozen=True)
class SegmenterConfig:
    """Which segmenter backs the pipeline, and how to reach it."""

    kind: str = SEGMENTER_REFERENCE
    endpoint: str = ""
    timeout_s: float = 30.0
    retries: int = 2
    tau_range: float = TAU_RANGE
    tau_intensity: float = TAU_INTENSITY

    def __post_init__(self) -> None:
        _require(self.kind in (SEGMENTER_REFERENCE, SEGMENTER_BRIDGE),
                 f"segmenter.kind must be '{SEGMENTER_REFERENCE}' or '{SEGMENTER_BRIDGE}'")
        _require(self.timeout_s > 0.0, "segmenter.timeout_s must be positive")
        _require(self.retries >= 0, "segmenter.retries must be non-negative")
        _require(self.tau_range >= 0.0 and self.tau_intensity >= 0.0,
                 "segmenter tolerances must be non-negative")


@dataclass(frozen=True)
class DetectionConfig:
    """Change classification, 3D verification, and obstacle queue limits."""

    iou_threshold: float = IOU_THRESHOLD
    verify_dist: float = VERIFY_DIST
    verify_fraction: float = VERIFY_FRACTION
    merge_radius: float = 1.0
    ttl_frames: int = 20
    queue_capacity: int = 64

    def __post_init__(self) -> None:
        _require(0.0 <= self.iou_threshold <= 1.0, "detection.iou_threshold must be in [0, 1]")
        _require(self.verify_dist > 0.0, "detection.verify_dist must be positive")
        _require(0.0 <= self.verify_fraction <= 1.0,
                 "detection.verify_fraction must be in [0, 1]")
        _require(self.merge_radius >= 0.0, "detection.merge_radius must be non-negative")
        _require(self.ttl_frames >= 1, "detection.ttl_frames must be >= 1")
        _require(self.queue_capacity >= 1, "detection.queue_capacity must be >= 1")


@dataclass(frozen=True)
class CorridorConfig:
    half_width: float = 2.0

    def __post_init__(self) -> None:
        _require(self.half_width > 0.0, "corridor.half_width must be positive")


@dataclass(frozen=True)
class PipelineConfig:
    camera: CameraConfig = field(default_factory=CameraConfig)
    prompting: PromptingConfig = field(default_factory=PromptingConfig)
    segmenter: SegmenterConfig = field(default_factory=SegmenterConfig)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    corridor: CorridorConfig = field(default_factory=CorridorConfig)

    def replace(self, **sections) -> "PipelineConfig":
        return dataclasses.replace(self, **sections)


_SECTIONS = {
    "camera": CameraConfig,
    "prompting": PromptingConfig,
    "segmenter": SegmenterConfig,
    "detection": DetectionConfig,
    "corridor": CorridorConfig,
}


def _coerce(name: str, value, target_type) -> object:
    """Check a raw TOML value against the dataclass field's type."""
    if target_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return int(value)
    if target_type is str:
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string, got {value!r}")
        return value
    # remaining case: the 12-number t_cv tuple
    if isinstance(value, (list, tuple)) and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        return tuple(float(v) for v in value)
    raise ConfigError(f"{name}: expected a list of numbers, got {value!r}")


def _build_section(section: str, cls, raw: Dict) -> object:
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        if key not in fields:
            raise ConfigError(f"unknown key '{section}.{key}'")
        target = cls.__dataclass_fields__[key].type
        # types are stored as strings under `from __future__ import annotations`
        target_type = {"int": int, "float": float, "str": str}.get(target, tuple)
        kwargs[key] = _coerce(f"{section}.{key}", value, target_type)
    return cls(**kwargs)


def parse_config(text: str) -> PipelineConfig:
    """Parse TOML-syntax configuration text into a validated PipelineConfig."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc

    sections = {}
    for name, body in raw.items():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section '[{name}]'")
        if not isinstance(body, dict):
            raise ConfigError(f"'{name}' must be a section, not a value")
        sections[name] = _build_section(name, _SECTIONS[name], body)
    return PipelineConfig(**sections)


def load_config(path) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())


def _parse_override_value(text: str):
    """Interpret a --set value: int, then float, then bool, else string."""
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    if text.startswith("["):
        try:
            parsed = tomllib.loads(f"v = {text}")
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse list override {text!r}: {exc}") from exc
        return parsed["v"]
    return text


def apply_overrides(config: PipelineConfig, overrides: Sequence[str]) -> PipelineConfig:
    """Apply ``section.key=value`` overrides on top of a parsed config."""
    by_section: Dict[str, Dict] = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        dotted, value = item.split("=", 1)
        parts = dotted.strip().split(".")
        if len(parts) != 2:
            raise ConfigError(f"override key {dotted!r} is not of the form section.key")
        section, key = parts
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section '{section}' in override {item!r}")
        by_section.setdefault(section, {})[key] = _parse_override_value(value.strip())

    new_sections = {}
    for section, updates in by_section.items():
        current = dataclasses.asdict(getattr(config, section))
        current.update(updates)
        new_sections[section] = _build_section(section, _SECTIONS[section], current)
    return config.replace(**new_sections) if new_sections else config
