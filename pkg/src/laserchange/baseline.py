"""Comparison detectors: plain pixel differencing and a 3D geometric
detector with a local roughness model.

The pixel baseline thresholds the same difference map the prompt stage
uses. The geometric baseline adapts its distance threshold to how rough
the map is around each query: it fits a plane through the k nearest map
points, measures their residual spread, and only flags a live point whose
nearest-neighbor distance exceeds both a floor and the local mean-plus-
alpha-sigma residual level. Smooth walls stay sensitive while vegetation
or gravel does not light up.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.spatial import cKDTree

from laserchange.geom import PointCloud
from laserchange.prompting import difference_map
from laserchange.render import RenderedView

#: Pixel-difference decision threshold (same scale as the difference map).
PIXEL_THRESHOLD = 0.2
#: Map neighbors used for the local plane fit.
K_NN = 16
#: Roughness multiplier; 0 disables the roughness model entirely.
ALPHA = 3.0
#: Hard floor under the adaptive threshold, meters.
TAU_MIN = 0.2

METHOD_PIXEL = "pixel_diff_baseline"
METHOD_3D = "geometric_3d_baseline"


@dataclass(frozen=True)
class BaselineResult:
    """Changed labels plus provenance: per-pixel mask or per-point flags."""

    changed: np.ndarray
    method: str
    timing_ms: float

    def __post_init__(self) -> None:
        if self.changed.dtype != np.bool_:
            raise ValueError("changed labels must be boolean")
        self.changed.setflags(write=False)


def pixel_diff_baseline(
    live: RenderedView,
    map_view: RenderedView,
    threshold: float = PIXEL_THRESHOLD,
) -> BaselineResult:
    """Flag pixels whose live/map difference exceeds a fixed threshold."""
    start = time.perf_counter()
    diff = difference_map(live, map_view)
    changed = diff.values > threshold
    elapsed = (time.perf_counter() - start) * 1e3
    return BaselineResult(changed=changed, method=METHOD_PIXEL, timing_ms=elapsed)


def geometric_3d_baseline(
    live: Union[PointCloud, np.ndarray],
    map_cloud: Union[PointCloud, np.ndarray],
    k_nn: int = K_NN,
    alpha: float = ALPHA,
    tau_min: float = TAU_MIN,
) -> BaselineResult:
    """Per-point change flags with a roughness-adaptive threshold.

    For each live point, its k_nn nearest map points define a local plane
    (least-squares via the smallest principal component); mu and sigma are
    the mean and population standard deviation of those map points'
    distances to the plane. The live point is flagged iff its nearest-map
    distance exceeds max(tau_min, mu + alpha * sigma).

    alpha = 0 switches the roughness model off, leaving pure tau_min
    thresholding (so the result coincides with the prompt stage's
    nearest-neighbor flags at equal thresholds). A map smaller than k_nn
    cannot support a plane fit and falls back the same way.
    """
    if k_nn < 1:
        raise ValueError("k_nn must be at least 1")
    live_xyz = live.xyz if isinstance(live, PointCloud) else np.asarray(live, dtype=np.float64)
    map_xyz = map_cloud.xyz if isinstance(map_cloud, PointCloud) else np.asarray(map_cloud, dtype=np.float64)
    live_xyz = live_xyz.reshape(-1, 3)
    map_xyz = map_xyz.reshape(-1, 3)

    start = time.perf_counter()
    n = live_xyz.shape[0]
    if n == 0:
        changed = np.zeros(0, dtype=bool)
    elif map_xyz.shape[0] == 0:
        changed = np.ones(n, dtype=bool)
    else:
        tree = cKDTree(map_xyz)
        d_nn, _ = tree.query(live_xyz, k=1, workers=1)
        if alpha == 0.0 or map_xyz.shape[0] < k_nn:
            changed = d_nn > tau_min
        else:
            _, knn_idx = tree.query(live_xyz, k=k_nn, workers=1)
            neigh = map_xyz[knn_idx]  # (n, k_nn, 3)
            center = neigh.mean(axis=1, keepdims=True)
            centered = neigh - center
            cov = np.einsum("nki,nkj->nij", centered, centered) / k_nn
            _, vecs = np.linalg.eigh(cov)
            normal = vecs[:, :, 0]  # smallest-eigenvalue direction
            resid = np.abs(np.einsum("nki,ni->nk", centered, normal))
            mu = resid.mean(axis=1)
            sigma = resid.std(axis=1)
            changed = d_nn > np.maximum(tau_min, mu + alpha * sigma)
    elapsed = (time.perf_counter() - start) * 1e3
    return BaselineResult(changed=changed, method=METHOD_3D, timing_ms=elapsed)


def point_flags_to_mask(flags: np.ndarray, view: RenderedView) -> np.ndarray:
    """Lift per-point flags into the image: a pixel is changed iff its
    source measurement is flagged. Pixels without a measurement never are."""
    flags = np.asarray(flags, dtype=bool)
    mask = np.zeros(view.shape, dtype=bool)
    has_point = view.valid & ~view.interpolated & (view.point_index >= 0)
    idx = view.point_index[has_point]
    if idx.size and idx.max() >= flags.shape[0]:
        raise ValueError("view references points beyond the flag array")
    mask[has_point] = flags[idx]
    return mask
