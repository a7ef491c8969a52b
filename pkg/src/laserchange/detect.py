"""Change classification, 3D verification, corridor filtering, and the
temporal obstacle queue.

A live mask counts as changed when no map mask overlaps it well (best IoU
strictly below the threshold). Because image-space novelty can be lighting
or viewpoint artifacts, a changed mask must also survive a 3D check: enough
of its back-projected points must be far from every map point. Surviving
candidates are summarized (centroid, axis-aligned box), tagged against the
driving corridor, and folded into a queue that persists detections across
frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from laserchange.geom import PointCloud
from laserchange.prompting import NeighborIndex
from laserchange.render import RenderedView
from laserchange.segment import BinaryMask, MaskSet

#: A live mask whose best map IoU is below this is a change (Eq.-style strict <).
IOU_THRESHOLD = 0.5
#: 3D verification: a point is novel when its nearest map point is farther than this.
VERIFY_DIST = 0.3
#: 3D verification: minimum novel fraction for a candidate to survive.
VERIFY_FRACTION = 0.5
#: Queue: candidates within this distance of an entry merge into it.
MERGE_RADIUS = 1.0
#: Queue: entries unseen for more than this many frames are dropped.
TTL_FRAMES = 20
#: Queue: maximum number of tracked obstacles.
QUEUE_CAPACITY = 64
#: Corridor half width, meters.
CORRIDOR_HALF_WIDTH = 2.0

MaskLike = Union[BinaryMask, np.ndarray]


def _as_mask_array(m: MaskLike) -> np.ndarray:
    arr = m.mask if isinstance(m, BinaryMask) else np.asarray(m)
    if arr.ndim != 2 or arr.dtype != np.bool_:
        raise ValueError("mask must be a 2D boolean array")
    return arr


def mask_iou(b1: MaskLike, b2: MaskLike) -> float:
    """Intersection over union of two binary masks; 0.0 when both are empty."""
    m1, m2 = _as_mask_array(b1), _as_mask_array(b2)
    if m1.shape != m2.shape:
        raise ValueError(f"mask shapes differ: {m1.shape} vs {m2.shape}")
    union = int(np.count_nonzero(m1 | m2))
    if union == 0:
        return 0.0
    return int(np.count_nonzero(m1 & m2)) / union


@dataclass(frozen=True)
class ChangeCandidate:
    """One changed live mask and everything derived from it."""

    live_mask: BinaryMask
    best_map_iou: float
    point_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    points_3d: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    centroid: Optional[np.ndarray] = None
    aabb: Optional[np.ndarray] = None
    verified_3d: bool = False
    in_corridor: Optional[bool] = None

    @property
    def n_points(self) -> int:
        return int(self.points_3d.shape[0])


def classify_changes(
    live: MaskSet, map_masks: MaskSet, theta: float = IOU_THRESHOLD
) -> List[ChangeCandidate]:
    """Emit a candidate for every non-empty live mask that no map mask matches.

    best_map_iou is the maximum IoU over all map masks (0.0 when there are
    none); the candidate is kept iff best_map_iou < theta, strictly, so a
    mask matched at exactly theta is considered unchanged.
    """
    out = []
    for live_mask in live:
        if live_mask.is_empty:
            continue
        best = 0.0
        for ref in map_masks:
            best = max(best, mask_iou(live_mask, ref))
            if best >= theta:
                break
        if best < theta:
            out.append(ChangeCandidate(live_mask=live_mask, best_map_iou=best))
    return out


def changed_points(
    mask: MaskLike, live_view: RenderedView, live_cloud: PointCloud
) -> Tuple[np.ndarray, np.ndarray]:
    """Back-project a mask to the live points it covers.

    Only pixels carrying an actual measurement contribute: interpolated and
    invalid pixels have no source point and are dropped.
    """
    m = _as_mask_array(mask)
    if m.shape != live_view.shape:
        raise ValueError("mask and view dimensions differ")
    take = m & live_view.valid & ~live_view.interpolated
    indices = live_view.point_index[take]
    indices = indices[indices >= 0].astype(np.int64)
    return indices, live_cloud.xyz[indices]


def summarize(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Centroid and axis-aligned bounding box of a non-empty point set."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise ValueError("cannot summarize an empty point set")
    return pts.mean(axis=0), np.stack([pts.min(axis=0), pts.max(axis=0)])


def attach_points(
    candidate: ChangeCandidate, live_view: RenderedView, live_cloud: PointCloud
) -> ChangeCandidate:
    """Fill a candidate's 3D payload from its mask."""
    indices, pts = changed_points(candidate.live_mask, live_view, live_cloud)
    if pts.shape[0] == 0:
        return replace(candidate, point_indices=indices, points_3d=pts,
                       centroid=None, aabb=None)
    centroid, aabb = summarize(pts)
    return replace(candidate, point_indices=indices, points_3d=pts,
                   centroid=centroid, aabb=aabb)


def verify_3d(
    candidate: ChangeCandidate,
    map_ref: Union[PointCloud, NeighborIndex, np.ndarray],
    tau: float = VERIFY_DIST,
    rho: float = VERIFY_FRACTION,
) -> bool:
    """Does the candidate stick out of the map in 3D?

    True iff at least a ``rho`` fraction of its points lie farther than
    ``tau`` from every map point. A candidate with no measured points can
    never be verified.
    """
    pts = candidate.points_3d
    if pts.shape[0] == 0:
        return False
    index = map_ref if isinstance(map_ref, NeighborIndex) else NeighborIndex(
        map_ref.xyz if isinstance(map_ref, PointCloud) else map_ref
    )
    novel = index.nearest_dist(pts, bound=tau) > tau
    return bool(novel.mean() >= rho)


@dataclass(frozen=True)
class Corridor:
    """The taught path widened into the region the robot may traverse."""

    polyline: np.ndarray  # (M, 3) ordered vertices
    half_width: float = CORRIDOR_HALF_WIDTH

    def __post_init__(self) -> None:
        poly = np.asarray(self.polyline, dtype=np.float64)
        if poly.ndim != 2 or poly.shape[1] != 3 or poly.shape[0] < 2:
            raise ValueError("polyline must be (M, 3) with M >= 2")
        if self.half_width <= 0.0:
            raise ValueError("half_width must be positive")
        poly.setflags(write=False)
        object.__setattr__(self, "polyline", poly)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Horizontal-distance membership test for an (N, 3) array.

        Height is ignored: the corridor is a ground-plane construct, and
        obstacles matter regardless of how tall they are.
        """
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)[:, :2]
        best = np.full(pts.shape[0], np.inf)
        for a, b in zip(self.polyline[:-1, :2], self.polyline[1:, :2]):
            ab = b - a
            denom = float(ab @ ab)
            if denom == 0.0:
                d = np.linalg.norm(pts - a, axis=1)
            else:
                t = np.clip((pts - a) @ ab / denom, 0.0, 1.0)
                d = np.linalg.norm(pts - (a + t[:, None] * ab), axis=1)
            best = np.minimum(best, d)
        return best <= self.half_width


def corridor_filter(points: np.ndarray, corridor: Corridor) -> Tuple[np.ndarray, np.ndarray]:
    """Split points into (inside, outside) by corridor membership."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    inside = corridor.contains(pts)
    return pts[inside], pts[~inside]


@dataclass
class ObstacleEntry:
    centroid: np.ndarray
    aabb: np.ndarray
    last_seen: int
    hit_count: int


class ObstacleQueue:
    """Temporal memory of detections.

    Re-observations of roughly the same place merge (running-mean centroid,
    box union, hit count), stale entries age out after ``ttl_frames``, and
    the queue never holds more than ``capacity`` entries, the oldest-seen
    going first.
    """

    def __init__(
        self,
        merge_radius: float = MERGE_RADIUS,
        ttl_frames: int = TTL_FRAMES,
        capacity: int = QUEUE_CAPACITY,
    ) -> None:
        if merge_radius <= 0.0 or ttl_frames < 0 or capacity < 1:
            raise ValueError("bad queue parameters")
        self.merge_radius = merge_radius
        self.ttl_frames = ttl_frames
        self.capacity = capacity
        self.entries: List[ObstacleEntry] = []

    def update(self, candidates: Sequence[ChangeCandidate], frame: int) -> None:
        for cand in candidates:
            if cand.centroid is None:
                continue
            self._absorb(cand, frame)
        self.entries = [
            e for e in self.entries if frame - e.last_seen <= self.ttl_frames
        ]
        if len(self.entries) > self.capacity:
            # evict oldest last_seen first; ties fall to the earliest entry
            order = sorted(
                range(len(self.entries)), key=lambda i: (self.entries[i].last_seen, i)
            )
            drop = set(order[: len(self.entries) - self.capacity])
            self.entries = [e for i, e in enumerate(self.entries) if i not in drop]

    def _absorb(self, cand: ChangeCandidate, frame: int) -> None:
        best_i, best_d = -1, np.inf
        for i, entry in enumerate(self.entries):
            d = float(np.linalg.norm(entry.centroid - cand.centroid))
            if d <= self.merge_radius and d < best_d:
                best_i, best_d = i, d
        if best_i < 0:
            self.entries.append(
                ObstacleEntry(
                    centroid=cand.centroid.copy(),
                    aabb=cand.aabb.copy(),
                    last_seen=frame,
                    hit_count=1,
                )
            )
            return
        entry = self.entries[best_i]
        n = entry.hit_count
        entry.centroid = (entry.centroid * n + cand.centroid) / (n + 1)
        entry.aabb = np.stack(
            [
                np.minimum(entry.aabb[0], cand.aabb[0]),
                np.maximum(entry.aabb[1], cand.aabb[1]),
            ]
        )
        entry.last_seen = frame
        entry.hit_count = n + 1

    def __len__(self) -> int:
        return len(self.entries)


def candidate_to_json(candidate: ChangeCandidate) -> dict:
    """The per-candidate fragment of a frame's change report."""
    return {
        "iou": candidate.best_map_iou,
        "verified": candidate.verified_3d,
        "centroid": None if candidate.centroid is None else [float(x) for x in candidate.centroid],
        "aabb": None if candidate.aabb is None else [[float(x) for x in row] for row in candidate.aabb],
        "n_points": candidate.n_points,
        "in_corridor": candidate.in_corridor,
    }
