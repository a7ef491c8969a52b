"""Virtual camera views rendered from LiDAR point clouds.

A cloud already expressed in the camera frame (z forward, x right, y down)
is projected with the pinhole model

    u = f_u * x / z + c_u        v = f_v * y / z + c_v

where ``f_u = W / (2 tan(fov_h / 2))`` and ``f_v = H / (2 tan(fov_v / 2))``.
Continuous coordinates are binned by floor; when several points land in one
pixel the smallest camera-frame z wins, ties resolved toward the lower point
index so renders are reproducible bit for bit. Every valid, non-interpolated
pixel remembers the index of the point it came from, which makes the render
invertible back to 3D.

An equirectangular variant maps azimuth ``atan2(x, z)`` to columns and
elevation ``asin(y / r)`` to rows at constant angular resolution, keeping the
nearest Euclidean range per bin.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from PIL import Image

from laserchange.geom import PointCloud, Pose

#: Points closer than this along the projection axis are never rendered.
Z_MIN = 0.1

#: Default hue saturation distance: ranges at or beyond this map to hue 255.
MAX_HUE_RANGE = 30.0

PINHOLE = "pinhole"
EQUIRECT = "equirect"

#: point_index value for pixels that carry no source measurement.
NO_POINT = -1


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole (or angular, for equirectangular views) camera parameters."""

    f_u: float
    f_v: float
    c_u: float
    c_v: float
    width: int
    height: int
    fov_h: float
    fov_v: float

    def __post_init__(self) -> None:
        if self.width < 2 or self.height < 2:
            raise ValueError("image must be at least 2x2 pixels")
        if self.f_u <= 0.0 or self.f_v <= 0.0:
            raise ValueError("focal lengths must be positive")
        if self.c_u != self.width / 2 or self.c_v != self.height / 2:
            raise ValueError("principal point must sit at the image center")


def vehicle_to_camera() -> Pose:
    """Default virtual-camera mount: at the vehicle origin, looking forward.

    Vehicle frame is x forward, y left, z up; camera frame is z forward,
    x right, y down. The returned pose maps vehicle coordinates into
    camera coordinates.
    """
    return Pose.from_rt(
        [[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]], (0.0, 0.0, 0.0)
    )


def intrinsics_from_fov(width: int, height: int, fov_h: float, fov_v: float) -> CameraIntrinsics:
    """Pinhole intrinsics for a target image size and field of view.

    >>> k = intrinsics_from_fov(256, 128, math.radians(90), math.radians(45))
    >>> k.f_u
    128.0
    """
    if not (0.0 < fov_h < math.pi) or not (0.0 < fov_v < math.pi):
        raise ValueError("pinhole field of view must lie in (0, pi)")
    if width < 2 or height < 2:
        raise ValueError("image must be at least 2x2 pixels")

    def half_tan(fov: float) -> float:
        # half-angle identity; unlike tan(fov/2) this is exact for right angles
        return math.sin(fov) / (1.0 + math.cos(fov))

    return CameraIntrinsics(
        f_u=width / (2.0 * half_tan(fov_h)),
        f_v=height / (2.0 * half_tan(fov_v)),
        c_u=width / 2.0,
        c_v=height / 2.0,
        width=width,
        height=height,
        fov_h=fov_h,
        fov_v=fov_v,
    )


def equirect_intrinsics(width: int, height: int, fov_h: float, fov_v: float) -> CameraIntrinsics:
    """Angular intrinsics: focal lengths become pixels per radian."""
    if not (0.0 < fov_h <= 2.0 * math.pi) or not (0.0 < fov_v <= math.pi):
        raise ValueError("equirectangular fov must be in (0, 2pi] x (0, pi]")
    if width < 2 or height < 2:
        raise ValueError("image must be at least 2x2 pixels")
    return CameraIntrinsics(
        f_u=width / fov_h,
        f_v=height / fov_v,
        c_u=width / 2.0,
        c_v=height / 2.0,
        width=width,
        height=height,
        fov_h=fov_h,
        fov_v=fov_v,
    )


class RenderedView:
    """Per-pixel result of rendering one cloud into one camera.

    Arrays are H x W and read-only: ``range_z`` (camera-frame z for pinhole
    views, Euclidean range for equirectangular ones), ``intensity``,
    ``valid``, ``interpolated``, and ``point_index`` (:data:`NO_POINT` where
    no source measurement exists). ``camera_pose`` is the camera-to-world
    transform the view was rendered for, when the caller knows it.
    """

    __slots__ = (
        "intrinsics",
        "model",
        "range_z",
        "intensity",
        "valid",
        "interpolated",
        "point_index",
        "camera_pose",
    )

    def __init__(
        self,
        intrinsics: CameraIntrinsics,
        model: str,
        range_z: np.ndarray,
        intensity: np.ndarray,
        valid: np.ndarray,
        interpolated: np.ndarray,
        point_index: np.ndarray,
        camera_pose: Optional[Pose] = None,
    ) -> None:
        shape = (intrinsics.height, intrinsics.width)
        for name, arr in (
            ("range_z", range_z),
            ("intensity", intensity),
            ("valid", valid),
            ("interpolated", interpolated),
            ("point_index", point_index),
        ):
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
        if model not in (PINHOLE, EQUIRECT):
            raise ValueError(f"unknown camera model {model!r}")
        for arr in (range_z, intensity, valid, interpolated, point_index):
            arr.setflags(write=False)
        self.intrinsics = intrinsics
        self.model = model
        self.range_z = range_z
        self.intensity = intensity
        self.valid = valid
        self.interpolated = interpolated
        self.point_index = point_index
        self.camera_pose = camera_pose

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.intrinsics.height, self.intrinsics.width)

    def __repr__(self) -> str:
        h, w = self.shape
        return f"RenderedView({self.model}, {w}x{h}, valid={int(self.valid.sum())})"


def _continuous_pinhole(k: CameraIntrinsics, xyz: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Continuous (u, v) plus depth for an (N, 3) camera-frame array."""
    z = xyz[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = k.f_u * xyz[:, 0] / z + k.c_u
        v = k.f_v * xyz[:, 1] / z + k.c_v
    return u, v, z


def _continuous_equirect(k: CameraIntrinsics, xyz: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Continuous (u, v) plus Euclidean range for an (N, 3) array."""
    r = np.linalg.norm(xyz, axis=1)
    azimuth = np.arctan2(xyz[:, 0], xyz[:, 2])
    with np.errstate(invalid="ignore"):
        elevation = np.arcsin(np.clip(xyz[:, 1] / np.where(r > 0, r, 1.0), -1.0, 1.0))
    u = k.f_u * azimuth + k.c_u
    v = k.f_v * elevation + k.c_v
    return u, v, r


def project(k: CameraIntrinsics, point) -> Optional[Tuple[int, int]]:
    """Pinhole-project one camera-frame point to its integer pixel.

    Returns ``None`` when the point is behind the near plane or falls outside
    the image.
    """
    p = np.asarray(point, dtype=np.float64).reshape(1, 3)
    if p[0, 2] <= Z_MIN:
        return None
    u, v, _ = _continuous_pinhole(k, p)
    col, row = int(math.floor(u[0])), int(math.floor(v[0]))
    if 0 <= col < k.width and 0 <= row < k.height:
        return (col, row)
    return None


def _zbuffer(
    k: CameraIntrinsics,
    model: str,
    cloud: PointCloud,
    u: np.ndarray,
    v: np.ndarray,
    depth: np.ndarray,
    keep: np.ndarray,
    camera_pose: Optional[Pose],
    wrap_u: bool = False,
) -> RenderedView:
    """Shared binning core: floor, bounds-check, keep min depth per pixel."""
    h, w = k.height, k.width
    # points on the camera plane project to inf/nan; their cast result is
    # garbage but `keep` already excludes them
    with np.errstate(invalid="ignore"):
        col = np.floor(u).astype(np.int64)
        row = np.floor(v).astype(np.int64)
    if wrap_u:
        col %= w
    keep = keep & (col >= 0) & (col < w) & (row >= 0) & (row < h)

    range_z = np.zeros((h, w))
    intensity = np.zeros((h, w))
    valid = np.zeros((h, w), dtype=bool)
    point_index = np.full((h, w), NO_POINT, dtype=np.int64)

    idx = np.nonzero(keep)[0]
    if idx.size:
        flat = row[idx] * w + col[idx]
        # nearest point wins each pixel, ties going to the lower source
        # index. One radix sort on the integer pixel key groups the
        # contenders; idx ascends within each group (stable sort over an
        # already-ascending array), so the first depth minimum in a group
        # is also the lowest-index one.
        order = np.argsort(flat, kind="stable")
        flat, idx = flat[order], idx[order]
        d = depth[idx]
        starts = np.nonzero(np.r_[True, flat[1:] != flat[:-1]])[0]
        group = np.cumsum(np.r_[True, flat[1:] != flat[:-1]]) - 1
        d_min = np.minimum.reduceat(d, starts)
        pos = np.where(d == d_min[group], np.arange(flat.size), flat.size)
        first = np.minimum.reduceat(pos, starts)
        winners = idx[first]
        cells = flat[starts]
        range_z.ravel()[cells] = depth[winners]
        intensity.ravel()[cells] = cloud.intensity[winners]
        valid.ravel()[cells] = True
        point_index.ravel()[cells] = winners

    return RenderedView(
        intrinsics=k,
        model=model,
        range_z=range_z,
        intensity=intensity,
        valid=valid,
        interpolated=np.zeros((h, w), dtype=bool),
        point_index=point_index,
        camera_pose=camera_pose,
    )


def render_view(
    cloud: PointCloud,
    k: CameraIntrinsics,
    z_min: float = Z_MIN,
    camera_pose: Optional[Pose] = None,
) -> RenderedView:
    """Render a camera-frame cloud into a pinhole view with z-buffering."""
    u, v, z = _continuous_pinhole(k, cloud.xyz)
    return _zbuffer(k, PINHOLE, cloud, u, v, z, z > z_min, camera_pose)


def render_equirect(
    cloud: PointCloud,
    width: int,
    height: int,
    fov_h: float,
    fov_v: float,
    r_min: float = Z_MIN,
    camera_pose: Optional[Pose] = None,
) -> RenderedView:
    """Render a camera-frame cloud into an equirectangular view.

    Columns wrap around the azimuth seam when ``fov_h`` covers the full
    circle, so a point at exactly +pi lands in column 0 rather than off the
    right edge.
    """
    k = equirect_intrinsics(width, height, fov_h, fov_v)
    u, v, r = _continuous_equirect(k, cloud.xyz)
    wrap = math.isclose(fov_h, 2.0 * math.pi)
    return _zbuffer(k, EQUIRECT, cloud, u, v, r, r > r_min, camera_pose, wrap_u=wrap)


def back_project(view: RenderedView, pixel: Tuple[int, int]) -> Optional[int]:
    """Source point index behind a pixel, or ``None`` when there is none.

    ``pixel`` is (column, row). Interpolated pixels carry no measurement and
    return ``None`` like invalid ones.
    """
    col, row = pixel
    if not (0 <= col < view.intrinsics.width and 0 <= row < view.intrinsics.height):
        raise IndexError(f"pixel {pixel} outside {view.intrinsics.width}x{view.intrinsics.height}")
    j = int(view.point_index[row, col])
    return None if j == NO_POINT else j


def interpolate_gaps(view: RenderedView) -> RenderedView:
    """Fill isolated holes from their 8-neighborhood, one single pass.

    An invalid pixel with at least one valid 8-neighbor (in the *input*
    view; pixels filled by this very pass never seed further filling) gets
    the arithmetic mean of those neighbors' range and intensity and is
    marked interpolated. Valid pixels are untouched.
    """
    h, w = view.shape
    valid = view.valid
    vf = valid.astype(np.float64)

    count = np.zeros((h, w))
    range_sum = np.zeros((h, w))
    inten_sum = np.zeros((h, w))
    rz = np.where(valid, view.range_z, 0.0)
    iz = np.where(valid, view.intensity, 0.0)

    # accumulate the 8 neighbors via shifted slices; dr/dc index the offset
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            src_r = slice(max(0, -dr), min(h, h - dr))
            src_c = slice(max(0, -dc), min(w, w - dc))
            dst_r = slice(max(0, dr), min(h, h + dr))
            dst_c = slice(max(0, dc), min(w, w + dc))
            count[dst_r, dst_c] += vf[src_r, src_c]
            range_sum[dst_r, dst_c] += rz[src_r, src_c]
            inten_sum[dst_r, dst_c] += iz[src_r, src_c]

    fill = (~valid) & (count > 0)
    range_z = view.range_z.copy()
    intensity = view.intensity.copy()
    range_z[fill] = range_sum[fill] / count[fill]
    intensity[fill] = inten_sum[fill] / count[fill]

    return RenderedView(
        intrinsics=view.intrinsics,
        model=view.model,
        range_z=range_z,
        intensity=intensity,
        valid=valid | fill,
        interpolated=view.interpolated | fill,
        point_index=view.point_index.copy(),
        camera_pose=view.camera_pose,
    )


def intensity_scale_for(view: RenderedView, percentile: float = 98.0) -> float:
    """Per-frame intensity normalizer: high percentile of valid intensities,
    floored at 1.0 so an all-dark frame cannot divide by ~zero."""
    vals = view.intensity[view.valid]
    if vals.size == 0:
        return 1.0
    return max(1.0, float(np.percentile(vals, percentile)))


@dataclass(frozen=True)
class HsvImage:
    """8-bit HSV raster; invalid pixels are (0, 0, 0)."""

    pixels: np.ndarray  # (H, W, 3) uint8

    def __post_init__(self) -> None:
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3 or self.pixels.dtype != np.uint8:
            raise ValueError("expected a (H, W, 3) uint8 array")
        self.pixels.setflags(write=False)

    @property
    def hue(self) -> np.ndarray:
        return self.pixels[:, :, 0]

    @property
    def saturation(self) -> np.ndarray:
        return self.pixels[:, :, 1]

    @property
    def value(self) -> np.ndarray:
        return self.pixels[:, :, 2]

    def to_rgb(self) -> np.ndarray:
        return hsv_to_rgb(self.pixels)

    def save_png(self, path) -> None:
        Image.fromarray(self.to_rgb(), mode="RGB").save(path, format="PNG")


def colorize(
    view: RenderedView,
    max_range: float = MAX_HUE_RANGE,
    intensity_scale: Optional[float] = None,
) -> HsvImage:
    """Encode a view as HSV: hue carries range, value carries intensity.

    hue = round(255 * clamp(range_z / max_range)), saturation = 255 at every
    valid pixel, value = round(255 * clamp(intensity / intensity_scale)).
    ``intensity_scale`` defaults to :func:`intensity_scale_for` on this view;
    detection passes a scale shared between the two frames being compared so
    their value channels are comparable.
    """
    if intensity_scale is None:
        intensity_scale = intensity_scale_for(view)
    if intensity_scale <= 0.0:
        raise ValueError("intensity_scale must be positive")
    hue = np.rint(255.0 * np.clip(view.range_z / max_range, 0.0, 1.0))
    val = np.rint(255.0 * np.clip(view.intensity / intensity_scale, 0.0, 1.0))
    out = np.zeros(view.shape + (3,), dtype=np.uint8)
    out[:, :, 0] = np.where(view.valid, hue, 0.0).astype(np.uint8)
    out[:, :, 1] = np.where(view.valid, 255, 0).astype(np.uint8)
    out[:, :, 2] = np.where(view.valid, val, 0.0).astype(np.uint8)
    return HsvImage(out)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    """Standard hue-sector HSV to RGB, hue byte spanning [0, 360) degrees."""
    if hsv.ndim != 3 or hsv.shape[2] != 3:
        raise ValueError("expected a (H, W, 3) array")
    h_deg = hsv[:, :, 0].astype(np.float64) * (360.0 / 256.0)
    s = hsv[:, :, 1].astype(np.float64) / 255.0
    v = hsv[:, :, 2].astype(np.float64) / 255.0

    c = v * s
    sector = h_deg / 60.0
    x = c * (1.0 - np.abs(sector % 2.0 - 1.0))
    zero = np.zeros_like(c)

    i = np.floor(sector).astype(int) % 6
    # per-sector (r, g, b) before adding the value offset
    r = np.choose(i, (c, x, zero, zero, x, c))
    g = np.choose(i, (x, c, c, x, zero, zero))
    b = np.choose(i, (zero, zero, x, c, c, x))
    m = v - c
    rgb = np.stack([r + m, g + m, b + m], axis=-1)
    return np.rint(rgb * 255.0).astype(np.uint8)


def view_to_json(view: RenderedView) -> dict:
    """Debug sidecar: dimensions, pose, and base64 little-endian arrays."""

    def b64(arr: np.ndarray, dtype) -> str:
        return base64.b64encode(np.ascontiguousarray(arr.astype(dtype)).tobytes()).decode("ascii")

    k = view.intrinsics
    return {
        "model": view.model,
        "width": k.width,
        "height": k.height,
        "intrinsics": {"f_u": k.f_u, "f_v": k.f_v, "c_u": k.c_u, "c_v": k.c_v,
                       "fov_h": k.fov_h, "fov_v": k.fov_v},
        "camera_pose": None if view.camera_pose is None else view.camera_pose.to_values(),
        "range_z": b64(view.range_z, "<f4"),
        "intensity": b64(view.intensity, "<f4"),
        "valid": b64(view.valid, np.uint8),
        "interpolated": b64(view.interpolated, np.uint8),
        "point_index": b64(view.point_index, "<i4"),
    }


def save_view_json(path, view: RenderedView) -> None:
    with open(path, "w", encoding="ascii") as f:
        json.dump(view_to_json(view), f, indent=2, sort_keys=True)
