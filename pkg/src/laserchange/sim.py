"""Synthetic LiDAR scenes and the benchmark generator built on top of them.

A scene is a ground surface plus a handful of solid primitives, each carrying
a reflectivity and an integer instance id. Scans are ray-cast analytically:
every emitted ray keeps the nearest surface hit within range, so with the
range noise turned off each returned point lies exactly on a surface. That
exactness is what the simulator tests lean on.

A benchmark bundles two passes through the same world: a teach pass recorded
without the injected objects and a repeat pass recorded with them. Ground
truth is expressed per repeat frame as the set of rendered pixels whose
retained point belongs to an injected object.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from laserchange.baseline import point_flags_to_mask
from laserchange.detect import Corridor
from laserchange.geom import (
    PointCloud,
    Pose,
    concatenate_clouds,
    read_ply,
    read_pose_file,
    write_ply,
    write_pose_file,
)
from laserchange.render import (
    CameraIntrinsics,
    intrinsics_from_fov,
    render_view,
    vehicle_to_camera,
)

GROUND_ID = 0
# Fixed wavenumbers (rad/m) of the sinusoidal ground relief.
GROUND_WAVE_X = 0.9
GROUND_WAVE_Y = 1.3

_HIT_EPS = 1e-9
_MARCH_STEPS = 64
_BISECT_ITERS = 48
_RAY_CHUNK = 16384


# -- sensor ------------------------------------------------------------------


@dataclass(frozen=True)
class SensorModel:
    """Spinning LiDAR: beams spread over a vertical fan, azimuths over a turn.

    Intensity follows a Lambertian target with inverse-square falloff,
    ``gain * reflectivity * cos(incidence) * (reference_range / range)^2``,
    evaluated at the true (noise-free) range.
    """

    n_beams: int = 128
    fov_v: float = math.radians(45.0)
    azimuth_steps: int = 1024
    max_range: float = 60.0
    sigma_range: float = 0.01
    intensity_gain: float = 1000.0
    reference_range: float = 1.0

    def __post_init__(self) -> None:
        if self.n_beams < 2:
            raise ValueError("need at least two beams")
        if self.azimuth_steps < 4:
            raise ValueError("need at least four azimuth steps")
        if not 0.0 < self.fov_v < math.pi:
            raise ValueError("vertical field of view must be in (0, pi)")
        if self.max_range <= 0.0:
            raise ValueError("max_range must be positive")
        if self.sigma_range < 0.0:
            raise ValueError("sigma_range must be non-negative")
        if self.intensity_gain <= 0.0 or self.reference_range <= 0.0:
            raise ValueError("intensity parameters must be positive")

    @property
    def n_rays(self) -> int:
        return self.n_beams * self.azimuth_steps


def sensor_rays(model: SensorModel) -> np.ndarray:
    """Unit ray directions in the sensor frame (x forward, y left, z up).

    Beams are elevation rows from -fov_v/2 to +fov_v/2 inclusive; each row
    sweeps azimuth_steps angles over [-pi, pi). Row-major order, azimuth
    fastest, matches the noise draw order in :func:`simulate_scan`.
    """
    elev = np.linspace(-0.5 * model.fov_v, 0.5 * model.fov_v, model.n_beams)
    azim = -math.pi + 2.0 * math.pi * np.arange(model.azimuth_steps) / model.azimuth_steps
    e = np.repeat(elev, model.azimuth_steps)
    a = np.tile(azim, model.n_beams)
    return np.stack([np.cos(e) * np.cos(a), np.cos(e) * np.sin(a), np.sin(e)], axis=1)


# -- surfaces ----------------------------------------------------------------


@dataclass(frozen=True)
class Ground:
    """Unbounded ground sheet around z = 0 with optional sinusoidal relief."""

    amplitude: float = 0.0
    reflectivity: float = 0.3

    def __post_init__(self) -> None:
        if self.amplitude < 0.0:
            raise ValueError("amplitude must be non-negative")
        if not 0.0 <= self.reflectivity <= 1.0:
            raise ValueError("reflectivity must be in [0, 1]")

    def height(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.amplitude == 0.0:
            return np.zeros_like(np.asarray(x, dtype=float))
        return self.amplitude * np.sin(GROUND_WAVE_X * x) * np.sin(GROUND_WAVE_Y * y)

    def normal(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        a = self.amplitude
        dx = a * GROUND_WAVE_X * np.cos(GROUND_WAVE_X * x) * np.sin(GROUND_WAVE_Y * y)
        dy = a * GROUND_WAVE_Y * np.sin(GROUND_WAVE_X * x) * np.cos(GROUND_WAVE_Y * y)
        n = np.stack([-dx, -dy, np.ones_like(x)], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)


def _intersect_ground(
    ground: Ground, origin: np.ndarray, dirs: np.ndarray, max_range: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = dirs.shape[0]
    t = np.full(n, np.inf)
    if ground.amplitude == 0.0:
        dz = dirs[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_flat = -origin[2] / dz
        ok = (dz < 0.0) & (t_flat > _HIT_EPS)
        t[ok] = t_flat[ok]
        normal = np.zeros((n, 3))
        normal[:, 2] = 1.0
        return t, normal, ok

    # Rough ground: the surface stays inside |z| <= amplitude, so the hit (if
    # any) lies where the ray's z crosses that slab. Sample the window, then
    # bisect the first sign change of z_ray - height.
    for start in range(0, n, _RAY_CHUNK):
        sl = slice(start, min(start + _RAY_CHUNK, n))
        t[sl] = _march_ground_chunk(ground, origin, dirs[sl], max_range)
    hit = np.isfinite(t)
    normal = np.zeros((n, 3))
    normal[:, 2] = 1.0
    if np.any(hit):
        px = origin[0] + t[hit] * dirs[hit, 0]
        py = origin[1] + t[hit] * dirs[hit, 1]
        normal[hit] = ground.normal(px, py)
    return t, normal, hit


def _march_ground_chunk(
    ground: Ground, origin: np.ndarray, dirs: np.ndarray, max_range: float
) -> np.ndarray:
    n = dirs.shape[0]
    dz = dirs[:, 2]
    amp = ground.amplitude

    def above(t: np.ndarray) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            x = origin[0] + t * dirs[:, 0]
            y = origin[1] + t * dirs[:, 1]
            z = origin[2] + t * dz
            return z - ground.height(x, y)

    down = dz < 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t_lo = np.where(down, (amp - origin[2]) / dz, np.inf)
        t_hi = np.where(down, (-amp - origin[2]) / dz, -np.inf)
    t_lo = np.clip(t_lo, 0.0, max_range)
    t_hi = np.minimum(t_hi, max_range)

    result = np.full(n, np.inf)
    active = down & (t_hi > t_lo)
    if not np.any(active):
        return result

    steps = np.linspace(0.0, 1.0, _MARCH_STEPS)
    lo = np.full(n, np.nan)
    hi = np.full(n, np.nan)
    prev = t_lo.copy()
    found = np.zeros(n, dtype=bool)
    for s in steps[1:]:
        cur = t_lo + s * (t_hi - t_lo)
        probe = active & ~found
        if not np.any(probe):
            break
        below = np.zeros(n, dtype=bool)
        below[probe] = above(cur)[probe] <= 0.0
        lo[below] = prev[below]
        hi[below] = cur[below]
        found |= below
        prev = cur
    if not np.any(found):
        return result

    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        neg = np.zeros(n, dtype=bool)
        neg[found] = above(mid)[found] <= 0.0
        hi[found & neg] = mid[found & neg]
        lo[found & ~neg] = mid[found & ~neg]
    out = 0.5 * (lo + hi)
    ok = found & (out > _HIT_EPS)
    result[ok] = out[ok]
    return result


# -- primitives --------------------------------------------------------------
#
# All primitives live in a local frame with the footprint centred on the
# origin and the base plane at z = 0, extending upward. `pose` maps local
# coordinates into the world, so placing an object on flat ground is just a
# translation of its base centre.


def _check_surface(reflectivity: float, instance_id: int) -> None:
    if not 0.0 <= reflectivity <= 1.0:
        raise ValueError("reflectivity must be in [0, 1]")
    if instance_id < 1:
        raise ValueError("instance ids below 1 are reserved for the ground")


@dataclass(frozen=True)
class Box:
    pose: Pose
    size: Tuple[float, float, float]
    reflectivity: float = 0.5
    instance_id: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "size", tuple(float(s) for s in self.size))
        if len(self.size) != 3 or any(s <= 0.0 for s in self.size):
            raise ValueError("size must be three positive extents")
        _check_surface(self.reflectivity, self.instance_id)

    def _intersect_local(
        self, o: np.ndarray, d: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        sx, sy, sz = self.size
        lo = np.array([-0.5 * sx, -0.5 * sy, 0.0])
        hi = np.array([0.5 * sx, 0.5 * sy, sz])
        zero = d == 0.0
        inside = (o >= lo) & (o <= hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo - o) / d
            t2 = (hi - o) / d
        # Parallel rays: unbounded interval when inside the slab, empty
        # (entry at +inf) when outside.
        t1 = np.where(zero, np.where(inside, -np.inf, np.inf), t1)
        t2 = np.where(zero, np.inf, t2)
        near = np.minimum(t1, t2)
        far = np.maximum(t1, t2)
        t_enter = near.max(axis=1)
        t_exit = far.min(axis=1)
        hit = (t_enter <= t_exit) & (t_enter > _HIT_EPS)
        axis = near.argmax(axis=1)
        rows = np.arange(d.shape[0])
        normal = np.zeros_like(d)
        normal[rows, axis] = -np.sign(d[rows, axis])
        t = np.where(hit, t_enter, np.inf)
        return t, normal, hit


@dataclass(frozen=True)
class Cylinder:
    pose: Pose
    radius: float
    height: float
    reflectivity: float = 0.5
    instance_id: int = 1

    def __post_init__(self) -> None:
        if self.radius <= 0.0 or self.height <= 0.0:
            raise ValueError("radius and height must be positive")
        _check_surface(self.reflectivity, self.instance_id)

    def _intersect_local(
        self, o: np.ndarray, d: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return _intersect_radial(o, d, self.radius, 0.0, self.height)


@dataclass(frozen=True)
class ConeFrustum:
    """Solid of revolution whose radius varies linearly with height."""

    pose: Pose
    radius_bottom: float
    radius_top: float
    height: float
    reflectivity: float = 0.5
    instance_id: int = 1

    def __post_init__(self) -> None:
        if self.radius_bottom < 0.0 or self.radius_top < 0.0:
            raise ValueError("radii must be non-negative")
        if self.radius_bottom == 0.0 and self.radius_top == 0.0:
            raise ValueError("at least one radius must be positive")
        if self.height <= 0.0:
            raise ValueError("height must be positive")
        _check_surface(self.reflectivity, self.instance_id)

    def _intersect_local(
        self, o: np.ndarray, d: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        slope = (self.radius_top - self.radius_bottom) / self.height
        return _intersect_radial(o, d, self.radius_bottom, slope, self.height)


def _intersect_radial(
    o: np.ndarray, d: np.ndarray, r0: float, slope: float, height: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nearest hit on x^2 + y^2 = (r0 + slope*z)^2 for z in [0, height],
    closed by horizontal caps at both ends. slope = 0 gives a cylinder."""
    n = d.shape[0]
    ox, oy, oz = o
    dx, dy, dz = d[:, 0], d[:, 1], d[:, 2]
    rb = r0 + slope * oz

    a = dx * dx + dy * dy - slope * slope * dz * dz
    b = 2.0 * (ox * dx + oy * dy - slope * dz * rb)
    c = ox * ox + oy * oy - rb * rb

    t_side = np.full(n, np.inf)
    quad = np.abs(a) > 1e-12
    disc = b * b - 4.0 * a * c
    has_root = quad & (disc >= 0.0)
    if np.any(has_root):
        sq = np.sqrt(np.where(has_root, disc, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            roots = np.stack(
                [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)], axis=1
            )
        z = oz + roots * dz[:, None]
        r_at = r0 + slope * z
        ok = (
            has_root[:, None]
            & (roots > _HIT_EPS)
            & (z >= 0.0)
            & (z <= height)
            & (r_at >= 0.0)
        )
        roots = np.where(ok, roots, np.inf)
        t_side = roots.min(axis=1)
    lin = ~quad & (np.abs(b) > 1e-12)
    if np.any(lin):
        with np.errstate(divide="ignore", invalid="ignore"):
            t_lin = -c / b
        z = oz + t_lin * dz
        ok = lin & (t_lin > _HIT_EPS) & (z >= 0.0) & (z <= height)
        t_side = np.where(ok & (t_lin < t_side), t_lin, t_side)

    def cap(z_cap: float, radius: float) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            t_cap = (z_cap - oz) / dz
            px = ox + t_cap * dx
            py = oy + t_cap * dy
            ok = (dz != 0.0) & (t_cap > _HIT_EPS) & (px * px + py * py <= radius * radius)
        return np.where(ok, t_cap, np.inf)

    t_bot = cap(0.0, r0)
    t_top = cap(height, r0 + slope * height)

    t = np.minimum(t_side, np.minimum(t_bot, t_top))
    hit = np.isfinite(t)

    normal = np.zeros((n, 3))
    side = hit & (t == t_side)
    if np.any(side):
        px = ox + t[side] * dx[side]
        py = oy + t[side] * dy[side]
        rad = np.sqrt(px * px + py * py)
        rad = np.where(rad == 0.0, 1.0, rad)
        ns = np.stack([px, py, -slope * rad], axis=1)
        normal[side] = ns / np.linalg.norm(ns, axis=1, keepdims=True)
    bot = hit & ~side & (t == t_bot)
    normal[bot] = (0.0, 0.0, -1.0)
    top = hit & ~side & ~bot
    normal[top] = (0.0, 0.0, 1.0)
    return t, normal, hit


# -- scene -------------------------------------------------------------------


@dataclass(frozen=True)
class Scene:
    ground: Ground
    objects: Tuple = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        ids = [obj.instance_id for obj in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object instance ids must be unique")

    def with_objects(self, extra: Sequence) -> "Scene":
        return Scene(self.ground, self.objects + tuple(extra))


def _cast_rays(
    scene: Scene, origin: np.ndarray, dirs: np.ndarray, max_range: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Nearest surface along each ray: (t, normal, reflectivity, id, hit)."""
    n = dirs.shape[0]
    best_t, best_n, hit = _intersect_ground(scene.ground, origin, dirs, max_range)
    best_refl = np.full(n, scene.ground.reflectivity)
    best_id = np.full(n, GROUND_ID, dtype=np.int64)

    for obj in scene.objects:
        inv = obj.pose.inverse()
        o_local = inv.apply(origin)
        d_local = dirs @ inv.rotation.T
        t, n_local, obj_hit = obj._intersect_local(o_local, d_local)
        closer = obj_hit & (t < best_t)
        if not np.any(closer):
            continue
        best_t = np.where(closer, t, best_t)
        best_n[closer] = n_local[closer] @ obj.pose.rotation.T
        best_refl = np.where(closer, obj.reflectivity, best_refl)
        best_id = np.where(closer, obj.instance_id, best_id)
        hit |= closer

    hit &= best_t <= max_range
    return best_t, best_n, best_refl, best_id, hit


def simulate_scan(scene: Scene, sensor_pose: Pose, model: SensorModel, seed) -> PointCloud:
    """Cast one full sweep and return the returns in the sensor frame.

    Range noise is added along the ray; intensity is computed from the true
    range so a given surface patch always reports the same strength. `seed`
    is anything numpy's default_rng accepts, e.g. a (base, stream, frame)
    triple for reproducible multi-scan runs.
    """
    origin = sensor_pose.translation
    if origin[2] <= scene.ground.amplitude:
        raise ValueError("sensor must start above the ground surface")
    dirs_s = sensor_rays(model)
    dirs_w = dirs_s @ sensor_pose.rotation.T

    t, normal, refl, inst, hit = _cast_rays(scene, origin, dirs_w, model.max_range)

    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, model.sigma_range, dirs_s.shape[0])

    cos_inc = np.clip(-np.sum(dirs_w * normal, axis=1), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        falloff = (model.reference_range / t) ** 2
    intensity = model.intensity_gain * refl * cos_inc * falloff

    keep = hit
    xyz = (t[keep] + noise[keep])[:, None] * dirs_s[keep]
    return PointCloud(xyz, intensity[keep], inst[keep], frame_label="sensor")


def build_submap(
    scene: Scene,
    poses: Sequence[Pose],
    center: int,
    model: SensorModel,
    base_seed: int,
    window: int = 2,
    stream: int = 0,
) -> PointCloud:
    """Union of the scans within `window` poses of `center`, expressed in the
    center pose's frame. Scan seeds derive from (base_seed, stream, index) so
    the same pose index always reproduces the same scan."""
    if not 0 <= center < len(poses):
        raise IndexError("center pose index out of range")
    first = max(0, center - window)
    last = min(len(poses) - 1, center + window)
    into_center = poses[center].inverse()
    parts = []
    for j in range(first, last + 1):
        scan = simulate_scan(scene, poses[j], model, seed=[base_seed, stream, j])
        parts.append(scan.transformed(into_center @ poses[j]))
    return concatenate_clouds(parts, frame_label=f"teach_{center:03d}")


# -- benchmark ---------------------------------------------------------------

TEACH_STREAM = 0
REPEAT_STREAM = 1


class Benchmark:
    """Teach/repeat dataset: scans, poses, per-frame ground truth, corridor.

    Teach scans see the static scene only; live scans see the static scene
    plus the injected objects. All scans are in their own sensor frame and
    poses map sensor coordinates into a shared world frame.
    """

    def __init__(
        self,
        scene_static: Scene,
        injected: Sequence,
        model: SensorModel,
        camera: CameraIntrinsics,
        teach_poses: Sequence[Pose],
        repeat_poses: Sequence[Pose],
        teach_scans: Sequence[PointCloud],
        live_scans: Sequence[PointCloud],
        gt_masks: Sequence[np.ndarray],
        corridor: Corridor,
        seed: int,
        submap_window: int,
    ) -> None:
        if len(teach_scans) != len(teach_poses):
            raise ValueError("one teach scan per teach pose required")
        if not len(live_scans) == len(repeat_poses) == len(gt_masks):
            raise ValueError("live scans, repeat poses and masks must align")
        self.scene_static = scene_static
        self.injected = tuple(injected)
        self.model = model
        self.camera = camera
        self.teach_poses = list(teach_poses)
        self.repeat_poses = list(repeat_poses)
        self.teach_scans = list(teach_scans)
        self.live_scans = list(live_scans)
        self.gt_masks = [np.asarray(m, dtype=bool) for m in gt_masks]
        self.corridor = corridor
        self.seed = seed
        self.submap_window = submap_window

    @property
    def injected_ids(self) -> frozenset:
        return frozenset(obj.instance_id for obj in self.injected)

    @property
    def n_frames(self) -> int:
        return len(self.repeat_poses)

    def nearest_teach_index(self, frame: int) -> int:
        target = self.repeat_poses[frame].translation
        dist = [np.linalg.norm(p.translation - target) for p in self.teach_poses]
        return int(np.argmin(dist))

    def submap_for(self, frame: int) -> Tuple[PointCloud, int]:
        """Accumulated map cloud for a live frame, in the frame of the nearest
        teach pose. Returns the cloud and that teach pose index."""
        center = self.nearest_teach_index(frame)
        first = max(0, center - self.submap_window)
        last = min(len(self.teach_poses) - 1, center + self.submap_window)
        into_center = self.teach_poses[center].inverse()
        parts = [
            self.teach_scans[j].transformed(into_center @ self.teach_poses[j])
            for j in range(first, last + 1)
        ]
        return concatenate_clouds(parts, frame_label=f"teach_{center:03d}"), center


def _gt_mask(scan: PointCloud, camera: CameraIntrinsics, injected_ids) -> np.ndarray:
    cam_cloud = scan.transformed(vehicle_to_camera())
    view = render_view(cam_cloud, camera)
    flags = np.isin(scan.instance_id, sorted(injected_ids))
    return point_flags_to_mask(flags, view)


def make_benchmark(
    scene_static: Scene,
    injected: Sequence,
    teach_poses: Sequence[Pose],
    repeat_poses: Sequence[Pose],
    model: SensorModel,
    camera: CameraIntrinsics,
    seed: int = 0,
    submap_window: int = 2,
    corridor_half_width: float = 2.0,
) -> Benchmark:
    """Simulate both passes and derive per-frame ground truth.

    The repeat scene is the static scene plus `injected`; ground truth marks
    exactly the rendered pixels whose retained point carries an injected
    instance id, so static objects (duplicates included) never contribute.
    """
    scene_repeat = scene_static.with_objects(injected)
    injected_ids = frozenset(obj.instance_id for obj in injected)

    teach_scans = [
        simulate_scan(scene_static, pose, model, seed=[seed, TEACH_STREAM, j])
        for j, pose in enumerate(teach_poses)
    ]
    live_scans = [
        simulate_scan(scene_repeat, pose, model, seed=[seed, REPEAT_STREAM, i])
        for i, pose in enumerate(repeat_poses)
    ]
    gt_masks = [_gt_mask(scan, camera, injected_ids) for scan in live_scans]

    polyline = np.array([p.translation for p in teach_poses])
    corridor = Corridor(polyline, corridor_half_width)

    return Benchmark(
        scene_static=scene_static,
        injected=injected,
        model=model,
        camera=camera,
        teach_poses=teach_poses,
        repeat_poses=repeat_poses,
        teach_scans=teach_scans,
        live_scans=live_scans,
        gt_masks=gt_masks,
        corridor=corridor,
        seed=seed,
        submap_window=submap_window,
    )


# -- the standard three-object course ----------------------------------------


def _panel(x: float, y: float, yaw_deg: float, size, reflectivity, instance_id) -> Box:
    """Thin upright box sunk slightly below grade so its base meets the
    ground at every phase of the relief wave."""
    rot = Pose.rot_z(math.radians(yaw_deg)).rotation
    return Box(
        Pose.from_rt(rot, (x, y, -0.15)),
        size,
        reflectivity=reflectivity,
        instance_id=instance_id,
    )


def standard_scene() -> Tuple[Scene, List]:
    """Walled corridor course: dark rough ground, static dressing, and three
    bright panel-shaped boxes to inject on the repeat pass. Returns (static
    scene, injected objects).

    The static side includes a panel identical in shape to an injected one
    (instance 7), so a correct detector must ignore it: it exists in both
    passes. The crate and the cylinder sit close enough to the teach line to
    cast map shadows the offset repeat pass can see into. Panels face the
    oncoming sensor so their lit side stays bright in every frame that can
    see them.
    """
    ground = Ground(amplitude=0.12, reflectivity=0.08)
    at = Pose.from_translation
    static = (
        Box(at(12.5, 8.0, 0.0), (35.0, 0.4, 3.5), reflectivity=0.5, instance_id=1),
        Box(at(12.5, -8.0, 0.0), (35.0, 0.4, 3.5), reflectivity=0.5, instance_id=2),
        Box(at(30.0, 0.0, 0.0), (0.4, 16.4, 3.5), reflectivity=0.45, instance_id=3),
        ConeFrustum(at(10.0, -4.0, 0.0), 0.35, 0.05, 0.9, reflectivity=0.85, instance_id=4),
        Box(at(7.0, 2.6, 0.0), (1.2, 1.0, 1.2), reflectivity=0.35, instance_id=5),
        Cylinder(at(9.5, -3.0, 0.0), 0.45, 1.4, reflectivity=0.6, instance_id=6),
        _panel(14.5, 2.8, -162.0, (0.18, 0.9, 1.65), 0.75, 7),
        Box(at(7.5, -2.0, 0.0), (0.55, 0.55, 0.7), reflectivity=0.6, instance_id=8),
    )
    injected = [
        _panel(9.5, -1.5, 152.0, (0.18, 0.9, 1.65), 0.75, 10),
        _panel(11.5, -1.5, 156.0, (0.18, 0.7, 1.45), 0.9, 11),
        _panel(13.5, -1.5, 158.0, (0.2, 1.1, 1.75), 1.0, 12),
    ]
    return Scene(ground, static), injected


def standard_benchmark(seed: int = 0) -> Benchmark:
    """The seeded course used by the acceptance checks: a straight teach run
    of 11 poses, 6 repeat frames offset 0.8 m to the side, three injected
    panels inside the corridor and one static duplicate outside it."""
    scene_static, injected = standard_scene()
    model = SensorModel()
    camera = intrinsics_from_fov(256, 128, math.radians(90.0), math.radians(45.0))
    teach = [Pose.from_translation(2.0 * j, 0.0, 1.0) for j in range(11)]
    repeat = [Pose.from_translation(4.0 + 2.0 * i, 0.8, 1.0) for i in range(6)]
    return make_benchmark(
        scene_static, injected, teach, repeat, model, camera, seed=seed
    )


# -- disk layout --------------------------------------------------------------
#
# out/
#   scene.json        world, sensor, camera, seed, injected ids
#   corridor.json     polyline and half width
#   poses_teach.txt   one 3x4 pose per line
#   poses_repeat.txt
#   clouds/teach_000.ply ...
#   clouds/live_000.ply ...
#   masks_gt/live_000.png   0/255 grayscale


def _primitive_to_json(obj) -> dict:
    common = {
        "pose": list(obj.pose.to_values()),
        "reflectivity": obj.reflectivity,
        "instance_id": obj.instance_id,
    }
    if isinstance(obj, Box):
        return {"type": "box", "size": list(obj.size), **common}
    if isinstance(obj, Cylinder):
        return {"type": "cylinder", "radius": obj.radius, "height": obj.height, **common}
    if isinstance(obj, ConeFrustum):
        return {
            "type": "cone_frustum",
            "radius_bottom": obj.radius_bottom,
            "radius_top": obj.radius_top,
            "height": obj.height,
            **common,
        }
    raise TypeError(f"unknown primitive: {type(obj).__name__}")


def _primitive_from_json(data: dict):
    pose = Pose.from_values(data["pose"])
    refl = data["reflectivity"]
    inst = data["instance_id"]
    kind = data["type"]
    if kind == "box":
        return Box(pose, tuple(data["size"]), refl, inst)
    if kind == "cylinder":
        return Cylinder(pose, data["radius"], data["height"], refl, inst)
    if kind == "cone_frustum":
        return ConeFrustum(
            pose, data["radius_bottom"], data["radius_top"], data["height"], refl, inst
        )
    raise ValueError(f"unknown primitive type: {kind!r}")


def save_benchmark(bench: Benchmark, out_dir) -> None:
    out_dir = os.fspath(out_dir)
    os.makedirs(os.path.join(out_dir, "clouds"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "masks_gt"), exist_ok=True)

    cam = bench.camera
    scene_doc = {
        "seed": bench.seed,
        "submap_window": bench.submap_window,
        "sensor": {
            "n_beams": bench.model.n_beams,
            "fov_v": bench.model.fov_v,
            "azimuth_steps": bench.model.azimuth_steps,
            "max_range": bench.model.max_range,
            "sigma_range": bench.model.sigma_range,
            "intensity_gain": bench.model.intensity_gain,
            "reference_range": bench.model.reference_range,
        },
        "camera": {
            "width": cam.width,
            "height": cam.height,
            "fov_h": cam.fov_h,
            "fov_v": cam.fov_v,
        },
        "ground": {
            "amplitude": bench.scene_static.ground.amplitude,
            "reflectivity": bench.scene_static.ground.reflectivity,
        },
        "objects_static": [_primitive_to_json(o) for o in bench.scene_static.objects],
        "objects_injected": [_primitive_to_json(o) for o in bench.injected],
    }
    with open(os.path.join(out_dir, "scene.json"), "w", encoding="ascii") as f:
        json.dump(scene_doc, f, indent=2, sort_keys=True)
        f.write("\n")

    corridor_doc = {
        "polyline": [list(map(float, p)) for p in bench.corridor.polyline],
        "half_width": bench.corridor.half_width,
    }
    with open(os.path.join(out_dir, "corridor.json"), "w", encoding="ascii") as f:
        json.dump(corridor_doc, f, indent=2, sort_keys=True)
        f.write("\n")

    write_pose_file(os.path.join(out_dir, "poses_teach.txt"), bench.teach_poses)
    write_pose_file(os.path.join(out_dir, "poses_repeat.txt"), bench.repeat_poses)

    for j, scan in enumerate(bench.teach_scans):
        write_ply(os.path.join(out_dir, "clouds", f"teach_{j:03d}.ply"), scan)
    for i, scan in enumerate(bench.live_scans):
        write_ply(os.path.join(out_dir, "clouds", f"live_{i:03d}.ply"), scan)
    for i, mask in enumerate(bench.gt_masks):
        img = Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L")
        img.save(os.path.join(out_dir, "masks_gt", f"live_{i:03d}.png"))


def load_benchmark(in_dir) -> Benchmark:
    in_dir = os.fspath(in_dir)
    with open(os.path.join(in_dir, "scene.json"), "r", encoding="ascii") as f:
        doc = json.load(f)
    with open(os.path.join(in_dir, "corridor.json"), "r", encoding="ascii") as f:
        corr = json.load(f)

    model = SensorModel(**doc["sensor"])
    cam = doc["camera"]
    camera = intrinsics_from_fov(cam["width"], cam["height"], cam["fov_h"], cam["fov_v"])
    ground = Ground(**doc["ground"])
    static = Scene(ground, tuple(_primitive_from_json(o) for o in doc["objects_static"]))
    injected = [_primitive_from_json(o) for o in doc["objects_injected"]]

    teach_poses = read_pose_file(os.path.join(in_dir, "poses_teach.txt"))
    repeat_poses = read_pose_file(os.path.join(in_dir, "poses_repeat.txt"))
    teach_scans = [
        read_ply(os.path.join(in_dir, "clouds", f"teach_{j:03d}.ply"), "sensor")
        for j in range(len(teach_poses))
    ]
    live_scans = [
        read_ply(os.path.join(in_dir, "clouds", f"live_{i:03d}.ply"), "sensor")
        for i in range(len(repeat_poses))
    ]
    gt_masks = []
    for i in range(len(repeat_poses)):
        img = Image.open(os.path.join(in_dir, "masks_gt", f"live_{i:03d}.png"))
        gt_masks.append(np.asarray(img) > 127)

    corridor = Corridor(np.asarray(corr["polyline"], dtype=float), corr["half_width"])
    return Benchmark(
        scene_static=static,
        injected=injected,
        model=model,
        camera=camera,
        teach_poses=teach_poses,
        repeat_poses=repeat_poses,
        teach_scans=teach_scans,
        live_scans=live_scans,
        gt_masks=gt_masks,
        corridor=corridor,
        seed=doc["seed"],
        submap_window=doc["submap_window"],
    )
