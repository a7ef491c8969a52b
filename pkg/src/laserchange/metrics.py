"""Pixel-level scoring and the per-method results table.

All aggregation is micro-averaged: true/false positive and false negative
pixel counts are summed across frames first and rates are computed from the
totals, so the result does not depend on frame order and frames with more
labelled pixels weigh more. Empty-set conventions: IoU of two empty masks is
1, precision with no predictions is 1, recall with no ground truth is 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from laserchange.detect import Corridor, mask_iou
from laserchange.geom import PointCloud, Pose
from laserchange.render import RenderedView


# -- counting ------------------------------------------------------------------


@dataclass(frozen=True)
class PixelCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "PixelCounts") -> "PixelCounts":
        return PixelCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class PixelRates:
    iou: float
    precision: float
    recall: float


def pixel_counts(pred: np.ndarray, gt: np.ndarray) -> PixelCounts:
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    return PixelCounts(
        tp=int(np.count_nonzero(pred & gt)),
        fp=int(np.count_nonzero(pred & ~gt)),
        fn=int(np.count_nonzero(~pred & gt)),
    )


def rates_from_counts(counts: PixelCounts) -> PixelRates:
    union = counts.tp + counts.fp + counts.fn
    iou = 1.0 if union == 0 else counts.tp / union
    denom_p = counts.tp + counts.fp
    precision = 1.0 if denom_p == 0 else counts.tp / denom_p
    denom_r = counts.tp + counts.fn
    recall = 1.0 if denom_r == 0 else counts.tp / denom_r
    return PixelRates(iou=iou, precision=precision, recall=recall)


def pixel_metrics(pred: np.ndarray, gt: np.ndarray) -> PixelRates:
    return rates_from_counts(pixel_counts(pred, gt))


# -- corridor restriction --------------------------------------------------------


def corridor_restriction(
    view: RenderedView, cloud: PointCloud, world_from_cloud: Pose, corridor: Corridor
) -> np.ndarray:
    """Pixels that carry a 3D measurement whose world point is in the corridor.

    Interpolated pixels have no measurement of their own and are excluded, so
    corridor scoring never counts them for either side.
    """
    has = view.valid & ~view.interpolated
    mask = np.zeros_like(has)
    if not has.any():
        return mask
    idx = view.point_index[has]
    world = world_from_cloud.apply(cloud.xyz[idx])
    mask[has] = corridor.contains(world)
    return mask


def corridor_counts(pred: np.ndarray, gt: np.ndarray, restriction: np.ndarray) -> PixelCounts:
    restriction = np.asarray(restriction, dtype=bool)
    return pixel_counts(np.asarray(pred, dtype=bool) & restriction,
                        np.asarray(gt, dtype=bool) & restriction)


def corridor_metrics(
    pred: np.ndarray,
    gt: np.ndarray,
    view: RenderedView,
    cloud: PointCloud,
    world_from_cloud: Pose,
    corridor: Corridor,
) -> PixelRates:
    restriction = corridor_restriction(view, cloud, world_from_cloud, corridor)
    return rates_from_counts(corridor_counts(pred, gt, restriction))


# -- instance assignment ---------------------------------------------------------


def instance_match(
    pred_masks: Sequence[np.ndarray], gt_masks: Sequence[np.ndarray]
) -> List[Optional[int]]:
    """Greedy per-prediction assignment: index of the best-overlapping ground
    truth mask, or None when nothing overlaps. Ties go to the lower index."""
    out: List[Optional[int]] = []
    for pred in pred_masks:
        best_iou = 0.0
        best: Optional[int] = None
        for j, gt in enumerate(gt_masks):
            iou = mask_iou(pred, gt)
            if iou > best_iou:
                best_iou = iou
                best = j
        out.append(best)
    return out


# -- per-method aggregation -------------------------------------------------------


@dataclass(frozen=True)
class FrameScore:
    """One method's scores on one frame."""

    full: PixelCounts
    corridor: PixelCounts
    runtime_ms: float


@dataclass(frozen=True)
class MethodSummary:
    method: str
    n_frames: int
    full_counts: PixelCounts
    corridor_counts: PixelCounts
    full: PixelRates
    corridor: PixelRates
    runtime_mean_ms: float
    runtime_std_ms: float


def summarize_method(method: str, frames: Sequence[FrameScore]) -> MethodSummary:
    if not frames:
        raise ValueError("need at least one frame")
    total_full = PixelCounts()
    total_corr = PixelCounts()
    for f in frames:
        total_full = total_full + f.full
        total_corr = total_corr + f.corridor
    times = np.array([f.runtime_ms for f in frames], dtype=float)
    std = float(times.std(ddof=1)) if len(times) > 1 else 0.0
    return MethodSummary(
        method=method,
        n_frames=len(frames),
        full_counts=total_full,
        corridor_counts=total_corr,
        full=rates_from_counts(total_full),
        corridor=rates_from_counts(total_corr),
        runtime_mean_ms=float(times.mean()),
        runtime_std_ms=std,
    )


def format_report(summaries: Sequence[MethodSummary]) -> str:
    """Fixed-width comparison table, percentages to one decimal place."""
    name_w = max([len("method")] + [len(s.method) for s in summaries])
    head_group = (
        f"{'':{name_w}}   ----- full fov ------   ----- corridor -----"
    )
    head_cols = (
        f"{'method':{name_w}}     iou   prec    rec     iou   prec    rec   runtime (ms)"
    )
    lines = [head_group, head_cols, "-" * len(head_cols)]
    for s in summaries:
        f, c = s.full, s.corridor
        lines.append(
            f"{s.method:{name_w}}   "
            f"{100.0 * f.iou:5.1f}  {100.0 * f.precision:5.1f}  {100.0 * f.recall:5.1f}   "
            f"{100.0 * c.iou:5.1f}  {100.0 * c.precision:5.1f}  {100.0 * c.recall:5.1f}   "
            f"{s.runtime_mean_ms:.1f} +/- {s.runtime_std_ms:.1f}"
        )
    return "\n".join(lines) + "\n"


def report_to_json(summaries: Sequence[MethodSummary]) -> dict:
    def rates(counts: PixelCounts, r: PixelRates) -> dict:
        return {
            "tp": counts.tp,
            "fp": counts.fp,
            "fn": counts.fn,
            "iou": r.iou,
            "precision": r.precision,
            "recall": r.recall,
        }

    return {
        "methods": [
            {
                "method": s.method,
                "n_frames": s.n_frames,
                "full": rates(s.full_counts, s.full),
                "corridor": rates(s.corridor_counts, s.corridor),
                "runtime_ms": {"mean": s.runtime_mean_ms, "std": s.runtime_std_ms},
            }
            for s in summaries
        ]
    }
