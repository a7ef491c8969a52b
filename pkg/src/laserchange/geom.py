"""Rigid-body poses and LiDAR point-cloud containers.

Frame convention: a pose ``T_ab`` maps coordinates expressed in frame ``b``
into frame ``a``, i.e. ``p_a = T_ab * p_b``. Translations are meters, angles
radians, throughout the package.

Point clouds keep their points in scan order; index ``i`` refers to the same
physical return before and after a rigid transform, which is what lets a
rendered pixel point back at its source measurement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

#: Largest allowed deviation of an input rotation block from orthonormality.
ORTHONORMALITY_TOL = 1e-6


class PoseError(ValueError):
    """Raised when a matrix cannot be interpreted as a rigid transform."""


def _polar_rotation(m: np.ndarray) -> np.ndarray:
    """Nearest proper rotation to ``m`` in the Frobenius norm (polar factor)."""
    u, _, vt = np.linalg.svd(m)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u = u.copy()
        u[:, -1] *= -1.0
        r = u @ vt
    return r


class Pose:
    """SE(3) rigid transform backed by a 4x4 homogeneous matrix.

    Construction validates the rotation block against
    :data:`ORTHONORMALITY_TOL` and then re-orthonormalizes it via polar
    decomposition; pose files coming out of localization are noisy, but
    everything downstream may rely on stored poses satisfying
    ``max|R^T R - I| < 1e-9`` and ``det R > 0``. Instances are immutable.
    """

    __slots__ = ("_matrix",)

    def __init__(self, matrix) -> None:
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise PoseError(f"expected a 4x4 matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise PoseError("pose matrix contains non-finite values")
        if not np.array_equal(m[3], (0.0, 0.0, 0.0, 1.0)):
            raise PoseError("bottom row must be exactly [0 0 0 1]")
        r = m[:3, :3]
        err = float(np.max(np.abs(r.T @ r - np.eye(3))))
        if err > ORTHONORMALITY_TOL:
            raise PoseError(f"rotation block is not orthonormal (deviation {err:.3e})")
        if np.linalg.det(r) <= 0.0:
            raise PoseError("rotation block must be a proper rotation (det > 0)")
        clean = np.eye(4)
        clean[:3, :3] = _polar_rotation(r)
        clean[:3, 3] = m[:3, 3]
        clean.setflags(write=False)
        self._matrix = clean

    # -- constructors ------------------------------------------------------

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(4))

    @classmethod
    def from_rt(cls, rotation, translation) -> "Pose":
        """Build from a 3x3 rotation and a 3-vector translation."""
        m = np.eye(4)
        m[:3, :3] = np.asarray(rotation, dtype=np.float64)
        m[:3, 3] = np.asarray(translation, dtype=np.float64)
        return cls(m)

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "Pose":
        """Build from 12 (row-major 3x4) or 16 (row-major 4x4) numbers."""
        v = np.asarray(values, dtype=np.float64).ravel()
        if v.size == 12:
            m = np.vstack([v.reshape(3, 4), (0.0, 0.0, 0.0, 1.0)])
        elif v.size == 16:
            m = v.reshape(4, 4)
        else:
            raise PoseError(f"expected 12 or 16 numbers, got {v.size}")
        return cls(m)

    @classmethod
    def from_translation(cls, x: float, y: float, z: float) -> "Pose":
        return cls.from_rt(np.eye(3), (x, y, z))

    @classmethod
    def rot_x(cls, angle: float) -> "Pose":
        c, s = math.cos(angle), math.sin(angle)
        return cls.from_rt([[1, 0, 0], [0, c, -s], [0, s, c]], (0, 0, 0))

    @classmethod
    def rot_y(cls, angle: float) -> "Pose":
        c, s = math.cos(angle), math.sin(angle)
        return cls.from_rt([[c, 0, s], [0, 1, 0], [-s, 0, c]], (0, 0, 0))

    @classmethod
    def rot_z(cls, angle: float) -> "Pose":
        c, s = math.cos(angle), math.sin(angle)
        return cls.from_rt([[c, -s, 0], [s, c, 0], [0, 0, 1]], (0, 0, 0))

    # -- accessors ---------------------------------------------------------

    @property
    def matrix(self) -> np.ndarray:
        """The 4x4 homogeneous matrix (read-only view)."""
        return self._matrix

    @property
    def rotation(self) -> np.ndarray:
        return self._matrix[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self._matrix[:3, 3]

    def to_values(self) -> list:
        """Row-major 3x4 flattening, the on-disk pose format."""
        return [float(x) for x in self._matrix[:3, :].ravel()]

    # -- algebra -----------------------------------------------------------

    def compose(self, other: "Pose") -> "Pose":
        """``self * other``: apply ``other`` first, then ``self``."""
        return Pose(self._matrix @ other.matrix)

    def __matmul__(self, other: "Pose") -> "Pose":
        return self.compose(other)

    def inverse(self) -> "Pose":
        r = self.rotation
        m = np.eye(4)
        m[:3, :3] = r.T
        m[:3, 3] = -(r.T @ self.translation)
        return Pose(m)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one (3,) point or an (N, 3) array of points."""
        p = np.asarray(points, dtype=np.float64)
        single = p.ndim == 1
        p = np.atleast_2d(p)
        out = p @ self.rotation.T + self.translation
        return out[0] if single else out

    def __repr__(self) -> str:
        t = self.translation
        return f"Pose(t=[{t[0]:.3f}, {t[1]:.3f}, {t[2]:.3f}])"


@dataclass(frozen=True)
class LidarPoint:
    """A single LiDAR return: position in meters plus unitless intensity.

    ``instance_id`` only exists for simulated / ground-truth data.
    """

    x: float
    y: float
    z: float
    intensity: float = 0.0
    instance_id: Optional[int] = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError("point coordinates must be finite")
        if not math.isfinite(self.intensity) or self.intensity < 0.0:
            raise ValueError("intensity must be finite and non-negative")
        if self.instance_id is not None and self.instance_id < 0:
            raise ValueError("instance_id must be non-negative")

    @property
    def xyz(self) -> np.ndarray:
        return np.array((self.x, self.y, self.z))


class PointCloud:
    """Ordered collection of LiDAR returns, stored as numpy arrays.

    Immutable once built. ``instance_id`` is either ``None`` (real sensor
    data) or an int array aligned with the points.
    """

    __slots__ = ("_xyz", "_intensity", "_instance_id", "frame_label")

    def __init__(self, xyz, intensity=None, instance_id=None, frame_label: str = "") -> None:
        pts = np.asarray(xyz, dtype=np.float64)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"xyz must be (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        n = pts.shape[0]
        if intensity is None:
            inten = np.zeros(n)
        else:
            inten = np.asarray(intensity, dtype=np.float64)
            if inten.shape != (n,):
                raise ValueError("intensity must be one value per point")
            if not np.all(np.isfinite(inten)) or np.any(inten < 0.0):
                raise ValueError("intensity must be finite and non-negative")
        inst = None
        if instance_id is not None:
            inst = np.asarray(instance_id, dtype=np.int64)
            if inst.shape != (n,):
                raise ValueError("instance_id must be one value per point")
            if np.any(inst < 0):
                raise ValueError("instance ids must be non-negative")
            inst.setflags(write=False)
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        inten.setflags(write=False)
        self._xyz = pts
        self._intensity = inten
        self._instance_id = inst
        self.frame_label = frame_label

    @classmethod
    def from_points(cls, points: Iterable[LidarPoint], frame_label: str = "") -> "PointCloud":
        pts = list(points)
        if not pts:
            return cls(np.zeros((0, 3)), frame_label=frame_label)
        xyz = np.array([(p.x, p.y, p.z) for p in pts])
        inten = np.array([p.intensity for p in pts])
        ids = [p.instance_id for p in pts]
        inst = np.array(ids, dtype=np.int64) if all(i is not None for i in ids) else None
        return cls(xyz, inten, inst, frame_label=frame_label)

    @property
    def xyz(self) -> np.ndarray:
        return self._xyz

    @property
    def intensity(self) -> np.ndarray:
        return self._intensity

    @property
    def instance_id(self) -> Optional[np.ndarray]:
        return self._instance_id

    def __len__(self) -> int:
        return self._xyz.shape[0]

    def point(self, i: int) -> LidarPoint:
        inst = None if self._instance_id is None else int(self._instance_id[i])
        x, y, z = self._xyz[i]
        return LidarPoint(float(x), float(y), float(z), float(self._intensity[i]), inst)

    def transformed(self, pose: Pose, frame_label: Optional[str] = None) -> "PointCloud":
        """Rigidly transform every point; intensity, ids and order carry over."""
        label = self.frame_label if frame_label is None else frame_label
        return PointCloud(pose.apply(self._xyz), self._intensity, self._instance_id, label)

    def __repr__(self) -> str:
        return f"PointCloud(n={len(self)}, frame={self.frame_label!r})"


def concatenate_clouds(clouds: Sequence[PointCloud], frame_label: str = "") -> PointCloud:
    """Stack clouds in order. Instance ids survive only if every input has them."""
    if not clouds:
        return PointCloud(np.zeros((0, 3)), frame_label=frame_label)
    xyz = np.vstack([c.xyz for c in clouds])
    inten = np.concatenate([c.intensity for c in clouds])
    inst = None
    if all(c.instance_id is not None for c in clouds):
        inst = np.concatenate([c.instance_id for c in clouds])
    return PointCloud(xyz, inten, inst, frame_label=frame_label)


# -- file formats ----------------------------------------------------------
#
# Poses: one pose per line, 12 whitespace-separated numbers, row-major 3x4
# (the bottom row is implied). Clouds: ASCII PLY with double x/y/z/intensity
# and an optional uint instance_id property.


def write_pose_file(path, poses: Sequence[Pose]) -> None:
    with open(path, "w", encoding="ascii") as f:
        for pose in poses:
            f.write(" ".join(f"{v:.17g}" for v in pose.to_values()) + "\n")


def read_pose_file(path) -> list:
    poses = []
    with open(path, "r", encoding="ascii") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            values = [float(tok) for tok in line.split()]
            if len(values) != 12:
                raise PoseError(f"{path}:{line_no}: expected 12 numbers, got {len(values)}")
            poses.append(Pose.from_values(values))
    return poses


def write_ply(path, cloud: PointCloud) -> None:
    """ASCII PLY writer. Coordinates/intensity are written with enough digits
    to round-trip float64 values exactly through :func:`read_ply`."""
    has_inst = cloud.instance_id is not None
    with open(path, "w", encoding="ascii") as f:
        f.write("ply\nformat ascii 1.0\n")
        f.write(f"element vertex {len(cloud)}\n")
        f.write("property double x\nproperty double y\nproperty double z\n")
        f.write("property double intensity\n")
        if has_inst:
            f.write("property uint instance_id\n")
        f.write("end_header\n")
        if has_inst:
            for (x, y, z), i, inst in zip(cloud.xyz, cloud.intensity, cloud.instance_id):
                f.write(f"{x:.17g} {y:.17g} {z:.17g} {i:.17g} {inst:d}\n")
        else:
            for (x, y, z), i in zip(cloud.xyz, cloud.intensity):
                f.write(f"{x:.17g} {y:.17g} {z:.17g} {i:.17g}\n")


def read_ply(path, frame_label: str = "") -> PointCloud:
    with open(path, "r", encoding="ascii") as f:
        if f.readline().strip() != "ply":
            raise ValueError(f"{path}: not a PLY file")
        if f.readline().strip() != "format ascii 1.0":
            raise ValueError(f"{path}: only ASCII PLY is supported")
        n = None
        props = []
        while True:
            line = f.readline()
            if not line:
                raise ValueError(f"{path}: truncated header")
            line = line.strip()
            if line.startswith("comment"):
                continue
            if line.startswith("element vertex"):
                n = int(line.split()[-1])
            elif line.startswith("element"):
                raise ValueError(f"{path}: unsupported element: {line}")
            elif line.startswith("property"):
                props.append(line.split()[-1])
            elif line == "end_header":
                break
        if n is None:
            raise ValueError(f"{path}: missing vertex element")
        for required in ("x", "y", "z", "intensity"):
            if required not in props:
                raise ValueError(f"{path}: missing property {required!r}")
        data = np.loadtxt(f, dtype=np.float64, max_rows=n, ndmin=2) if n else np.zeros((0, len(props)))
        if data.shape != (n, len(props)):
            raise ValueError(f"{path}: expected {n}x{len(props)} values, got {data.shape}")
    col = {name: i for i, name in enumerate(props)}
    xyz = data[:, [col["x"], col["y"], col["z"]]]
    inten = data[:, col["intensity"]]
    inst = data[:, col["instance_id"]].astype(np.int64) if "instance_id" in col else None
    return PointCloud(xyz, inten, inst, frame_label=frame_label)
