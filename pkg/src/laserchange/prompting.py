"""Prompt generation: where should segmentation look for changes.

Two routes produce point prompts. The image route differences the live and
map views per pixel (range in meters, intensity normalized to [0, 1] by a
shared scale) and picks the strongest local maxima subject to a minimum
pixel spacing. The 3D route flags live points far from their nearest map
neighbor, clusters the flags into Euclidean connected components, and
projects the largest components' centroids into the live view.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _csgraph_components
from scipy.spatial import cKDTree

from laserchange.geom import PointCloud
from laserchange.render import (
    EQUIRECT,
    RenderedView,
    Z_MIN,
    _continuous_equirect,
    _continuous_pinhole,
    intensity_scale_for,
)

#: Number of prompts per frame and per route.
DEFAULT_K = 5
#: Minimum pixel spacing between accepted image-route prompts.
DEFAULT_MIN_DIST = 16.0
#: Difference values at or below this are treated as sensor noise.
NOISE_FLOOR = 0.2
#: A live point farther than this from every map point counts as changed.
NN_DIST_THRESHOLD = 0.3
#: Two flagged points within this distance belong to the same component.
COMPONENT_RADIUS = 0.5

PIXEL_DIFF = "pixel_diff"
COMPONENT_CENTROID = "component_centroid"


@dataclass(frozen=True)
class Prompt:
    """A single seed pixel for segmentation. ``u`` is column, ``v`` row."""

    u: int
    v: int
    strength: float
    source: str

    def __post_init__(self) -> None:
        if self.source not in (PIXEL_DIFF, COMPONENT_CENTROID):
            raise ValueError(f"unknown prompt source {self.source!r}")
        if self.strength < 0.0:
            raise ValueError("strength must be non-negative")


@dataclass(frozen=True)
class DifferenceMap:
    """Per-pixel change magnitude; zero wherever either view had no data."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != self.valid.shape:
            raise ValueError("values and valid must share a shape")
        self.values.setflags(write=False)
        self.valid.setflags(write=False)


@dataclass(frozen=True)
class Component3D:
    """A connected cluster of changed live points."""

    indices: np.ndarray  # indices into the live cloud
    centroid: np.ndarray  # (3,)
    cardinality: int

    def __post_init__(self) -> None:
        if self.cardinality < 1 or self.indices.size != self.cardinality:
            raise ValueError("component must own at least one point")
        self.indices.setflags(write=False)
        self.centroid.setflags(write=False)


def joint_intensity_scale(live: RenderedView, map_view: RenderedView, percentile: float = 98.0) -> float:
    """One normalizer for both frames so their value channels compare.

    Same percentile-with-floor rule as the single-view scale, computed over
    the pooled valid intensities of the two views.
    """
    pooled = np.concatenate([live.intensity[live.valid], map_view.intensity[map_view.valid]])
    if pooled.size == 0:
        return 1.0
    return max(1.0, float(np.percentile(pooled, percentile)))


def difference_map(
    live: RenderedView,
    map_view: RenderedView,
    w_range: float = 1.0,
    w_intensity: float = 1.0,
    intensity_scale: Optional[float] = None,
) -> DifferenceMap:
    """Weighted two-channel pixel difference between aligned views.

    value = sqrt(w_r * d_range^2 + w_i * d_intensity^2) with intensity first
    scaled into [0, 1]; pixels lacking data in either view score 0.
    """
    if live.shape != map_view.shape:
        raise ValueError(f"view shapes differ: {live.shape} vs {map_view.shape}")
    if intensity_scale is None:
        intensity_scale = joint_intensity_scale(live, map_view)
    both = live.valid & map_view.valid
    d_range = live.range_z - map_view.range_z
    live_n = np.clip(live.intensity / intensity_scale, 0.0, 1.0)
    map_n = np.clip(map_view.intensity / intensity_scale, 0.0, 1.0)
    d_int = live_n - map_n
    values = np.where(
        both, np.sqrt(w_range * d_range**2 + w_intensity * d_int**2), 0.0
    )
    return DifferenceMap(values=values, valid=both)


def top_k_maxima(
    diff: DifferenceMap,
    k: int = DEFAULT_K,
    min_dist: float = DEFAULT_MIN_DIST,
    noise_floor: float = NOISE_FLOOR,
) -> List[Prompt]:
    """Strongest well-separated strict local maxima of the difference map.

    A candidate must exceed all eight neighbors strictly (plateaus produce
    no prompts) and exceed ``noise_floor``. Candidates are visited by value,
    ties broken by row then column, and greedily accepted when at least
    ``min_dist`` pixels (Euclidean) from every already-accepted prompt.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if min_dist < 0.0:
        raise ValueError("min_dist must be non-negative")
    v = diff.values
    h, w = v.shape
    pad = np.full((h + 2, w + 2), -np.inf)
    pad[1:-1, 1:-1] = v
    strict = np.ones((h, w), dtype=bool)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            strict &= v > pad[1 + dr : h + 1 + dr, 1 + dc : w + 1 + dc]
    strict &= v > noise_floor

    rows, cols = np.nonzero(strict)
    if rows.size == 0:
        return []
    vals = v[rows, cols]
    order = np.lexsort((cols, rows, -vals))
    accepted: List[Prompt] = []
    acc_rc: List[Tuple[int, int]] = []
    md2 = min_dist * min_dist
    for i in order:
        r, c = int(rows[i]), int(cols[i])
        if all((r - ar) ** 2 + (c - ac) ** 2 >= md2 for ar, ac in acc_rc):
            accepted.append(Prompt(u=c, v=r, strength=float(vals[i]), source=PIXEL_DIFF))
            acc_rc.append((r, c))
            if len(accepted) == k:
                break
    return accepted


class NeighborIndex:
    """Reusable nearest-neighbor index over a fixed reference cloud.

    Wrapping the tree lets a caller pay the build cost once per map and
    query it for every live frame.
    """

    __slots__ = ("_tree", "size")

    def __init__(self, points: np.ndarray) -> None:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        self.size = pts.shape[0]
        self._tree = cKDTree(pts) if self.size else None

    def nearest_dist(self, queries: np.ndarray, bound: Optional[float] = None) -> np.ndarray:
        """Distance to the nearest reference point per query row.

        ``bound`` caps the search: queries with no neighbor within it come
        back as inf. Callers that only compare against a threshold pass the
        threshold here; the tree prunes instead of walking to the true
        nearest, and the comparison result is unchanged.
        """
        q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        if self._tree is None:
            return np.full(q.shape[0], np.inf)
        if bound is None:
            d, _ = self._tree.query(q, k=1, workers=1)
        else:
            d, _ = self._tree.query(q, k=1, workers=1, distance_upper_bound=bound)
        return d


def nn_change_flags(
    live: Union[PointCloud, np.ndarray],
    map_ref: Union[PointCloud, NeighborIndex, np.ndarray],
    dist_threshold: float = NN_DIST_THRESHOLD,
) -> np.ndarray:
    """Flag live points whose nearest map neighbor is farther than the
    threshold. An empty map flags everything: with nothing to explain a
    measurement, it counts as change."""
    live_xyz = live.xyz if isinstance(live, PointCloud) else np.asarray(live, dtype=np.float64)
    index = map_ref if isinstance(map_ref, NeighborIndex) else NeighborIndex(
        map_ref.xyz if isinstance(map_ref, PointCloud) else map_ref
    )
    if live_xyz.size == 0:
        return np.zeros(0, dtype=bool)
    return index.nearest_dist(live_xyz, bound=dist_threshold) > dist_threshold


def connected_components(
    points: np.ndarray,
    radius: float = COMPONENT_RADIUS,
    indices: Optional[np.ndarray] = None,
) -> List[Component3D]:
    """Cluster points by the transitive closure of pairwise distance ≤ radius.

    ``indices`` optionally names each row of ``points`` in some outer cloud;
    defaults to 0..M-1. Components come back largest first, ties by their
    smallest member index.
    """
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    m = pts.shape[0]
    if indices is None:
        indices = np.arange(m)
    else:
        indices = np.asarray(indices, dtype=np.int64)
        if indices.shape != (m,):
            raise ValueError("indices must name every point")
    if m == 0:
        return []
    pairs = cKDTree(pts).query_pairs(radius, output_type="ndarray")
    if pairs.size:
        ones = np.ones(pairs.shape[0], dtype=np.int8)
        adj = coo_matrix((ones, (pairs[:, 0], pairs[:, 1])), shape=(m, m))
    else:
        adj = coo_matrix((m, m), dtype=np.int8)
    n_comp, labels = _csgraph_components(adj, directed=False)

    comps = []
    for lab in range(n_comp):
        rows = np.nonzero(labels == lab)[0]
        comps.append(
            Component3D(
                indices=indices[rows].copy(),
                centroid=pts[rows].mean(axis=0),
                cardinality=int(rows.size),
            )
        )
    comps.sort(key=lambda c: (-c.cardinality, int(c.indices.min())))
    return comps


def _continuous_projection(view: RenderedView, xyz: np.ndarray):
    if view.model == EQUIRECT:
        return _continuous_equirect(view.intrinsics, xyz)
    return _continuous_pinhole(view.intrinsics, xyz)


def components_to_prompts(
    comps: Sequence[Component3D],
    k: int,
    live_view: RenderedView,
    live_cloud: PointCloud,
) -> List[Prompt]:
    """Project the k largest components into the live view as prompts.

    The centroid's pixel is used when it carries data; otherwise the prompt
    snaps to the member point whose pixel lies nearest the centroid's
    continuous image position. Only the k largest components are considered;
    one of them having no member in view yields fewer prompts, not a
    replacement. Strength is the component's cardinality.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    kin = live_view.intrinsics
    h, w = live_view.shape
    wrap = live_view.model == EQUIRECT and math.isclose(kin.fov_h, 2.0 * math.pi)

    prompts: List[Prompt] = []
    for comp in comps[:k]:
        member_xyz = live_cloud.xyz[comp.indices]
        mu, mv, mz = _continuous_projection(live_view, member_xyz)
        mcol = np.floor(mu).astype(np.int64)
        mrow = np.floor(mv).astype(np.int64)
        if wrap:
            mcol %= w
        ok = (mz > Z_MIN) & (mcol >= 0) & (mcol < w) & (mrow >= 0) & (mrow < h)
        ok &= np.isfinite(mu) & np.isfinite(mv)
        in_view = np.nonzero(ok)[0]
        if in_view.size == 0:
            continue
        # member pixels are valid by construction when the view was rendered
        # from this cloud; guard anyway for views rendered from other clouds
        in_view = in_view[live_view.valid[mrow[in_view], mcol[in_view]]]
        if in_view.size == 0:
            continue

        cu, cv, cz = _continuous_projection(live_view, comp.centroid.reshape(1, 3))
        ccol, crow = math.floor(cu[0]), math.floor(cv[0])
        if wrap:
            ccol %= w
        centroid_in = cz[0] > Z_MIN and 0 <= ccol < w and 0 <= crow < h
        if centroid_in and live_view.valid[crow, ccol]:
            prompts.append(
                Prompt(u=int(ccol), v=int(crow), strength=float(comp.cardinality),
                       source=COMPONENT_CENTROID)
            )
            continue
        if centroid_in or cz[0] > Z_MIN:
            ref_u, ref_v = float(cu[0]), float(cv[0])
        else:
            # centroid behind the camera: fall back to the members' mean pixel
            ref_u = float(mu[in_view].mean())
            ref_v = float(mv[in_view].mean())
        d2 = (mcol[in_view] - ref_u) ** 2 + (mrow[in_view] - ref_v) ** 2
        best = np.lexsort((mcol[in_view], mrow[in_view], d2))[0]
        j = in_view[best]
        prompts.append(
            Prompt(u=int(mcol[j]), v=int(mrow[j]), strength=float(comp.cardinality),
                   source=COMPONENT_CENTROID)
        )
    return prompts


def prompts_to_json(prompts: Sequence[Prompt]) -> str:
    return json.dumps(
        [{"u": p.u, "v": p.v, "strength": p.strength, "source": p.source} for p in prompts]
    )


def prompts_from_json(text: str) -> List[Prompt]:
    return [
        Prompt(u=int(d["u"]), v=int(d["v"]), strength=float(d["strength"]), source=d["source"])
        for d in json.loads(text)
    ]
