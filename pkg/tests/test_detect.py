"""Tests for change classification, 3D verification, corridor membership,
and the obstacle queue.

IoU is checked against explicit pixel counting, verification against a
brute-force nearest-neighbor fraction, and corridor membership against a
scalar point-to-segment oracle.
"""

import math

import numpy as np
import pytest

from laserchange.detect import (
    ChangeCandidate,
    Corridor,
    ObstacleQueue,
    attach_points,
    candidate_to_json,
    changed_points,
    classify_changes,
    corridor_filter,
    mask_iou,
    summarize,
    verify_3d,
)
from laserchange.geom import PointCloud
from laserchange.prompting import PIXEL_DIFF, Prompt
from laserchange.render import interpolate_gaps, intrinsics_from_fov, render_view
from laserchange.segment import BinaryMask, MaskSet

K_SMALL = intrinsics_from_fov(32, 16, math.radians(90.0), math.radians(45.0))


def _prompt(u=0, v=0):
    return Prompt(u=u, v=v, strength=1.0, source=PIXEL_DIFF)


def _bin(mask):
    return BinaryMask(mask=np.asarray(mask, dtype=bool), prompt=_prompt())


class TestMaskIou:
    def test_identical_nonempty(self):
        m = np.zeros((4, 4), dtype=bool)
        m[1:3, 1:3] = True
        assert mask_iou(m, m) == 1.0

    def test_disjoint(self):
        a = np.zeros((4, 4), dtype=bool)
        b = np.zeros((4, 4), dtype=bool)
        a[0, 0] = True
        b[3, 3] = True
        assert mask_iou(a, b) == 0.0

    def test_hand_counted_half(self):
        a = np.ones((2, 2), dtype=bool)
        b = np.zeros((2, 2), dtype=bool)
        b[:, 0] = True
        assert mask_iou(a, b) == 0.5

    def test_both_empty_defined_zero(self):
        assert mask_iou(np.zeros((3, 3), bool), np.zeros((3, 3), bool)) == 0.0

    def test_matches_counting_oracle(self):
        rng = np.random.default_rng(40)
        for _ in range(100):
            a = rng.uniform(size=(16, 16)) < rng.uniform()
            b = rng.uniform(size=(16, 16)) < rng.uniform()
            inter = sum(
                1 for r in range(16) for c in range(16) if a[r, c] and b[r, c]
            )
            union = sum(
                1 for r in range(16) for c in range(16) if a[r, c] or b[r, c]
            )
            expect = inter / union if union else 0.0
            assert mask_iou(a, b) == expect
            assert mask_iou(b, a) == mask_iou(a, b)
            assert 0.0 <= mask_iou(a, b) <= 1.0

    def test_accepts_binary_mask_wrapper(self):
        a = _bin(np.ones((2, 2)))
        assert mask_iou(a, a) == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mask_iou(np.zeros((2, 2), bool), np.zeros((3, 3), bool))


class TestClassifyChanges:
    def _sets(self, live_arrays, map_arrays):
        return MaskSet([_bin(m) for m in live_arrays]), MaskSet([_bin(m) for m in map_arrays])

    def test_matched_mask_not_changed(self):
        m = np.zeros((4, 4), dtype=bool)
        m[0:2, 0:2] = True
        live, ref = self._sets([m], [m])
        assert classify_changes(live, ref) == []

    def test_unmatched_mask_changed(self):
        a = np.zeros((4, 4), dtype=bool)
        b = np.zeros((4, 4), dtype=bool)
        a[0, 0] = True
        b[3, 3] = True
        live, ref = self._sets([a], [b])
        out = classify_changes(live, ref)
        assert len(out) == 1
        assert out[0].best_map_iou == 0.0

    def test_exactly_threshold_is_unchanged(self):
        a = np.ones((2, 2), dtype=bool)
        b = np.zeros((2, 2), dtype=bool)
        b[:, 0] = True  # IoU exactly 0.5
        live, ref = self._sets([a], [b])
        assert classify_changes(live, ref, theta=0.5) == []

    def test_empty_live_masks_skipped(self):
        live, ref = self._sets([np.zeros((2, 2), bool)], [])
        assert classify_changes(live, ref) == []

    def test_theta_monotonicity(self):
        rng = np.random.default_rng(41)
        live_arrays = [rng.uniform(size=(8, 8)) < 0.4 for _ in range(4)]
        map_arrays = [rng.uniform(size=(8, 8)) < 0.4 for _ in range(3)]
        live, ref = self._sets(live_arrays, map_arrays)
        assert classify_changes(live, ref, theta=0.0) == []
        n_nonempty = sum(1 for m in live_arrays if m.any())
        assert len(classify_changes(live, ref, theta=1.0 + 1e-9)) == n_nonempty

    def test_no_map_masks_means_everything_changed(self):
        m = np.ones((2, 2), dtype=bool)
        live, ref = self._sets([m], [])
        out = classify_changes(live, ref)
        assert len(out) == 1 and out[0].best_map_iou == 0.0


class TestChangedPoints:
    def test_single_point_mask(self):
        cloud = PointCloud([[0.0, 0.0, 5.0], [1.0, 0.5, 7.0]])
        view = render_view(cloud, K_SMALL)
        mask = np.zeros(view.shape, dtype=bool)
        rows, cols = np.nonzero(view.point_index == 0)
        mask[rows[0], cols[0]] = True
        indices, pts = changed_points(mask, view, cloud)
        np.testing.assert_array_equal(indices, [0])
        np.testing.assert_array_equal(pts, [[0.0, 0.0, 5.0]])

    def test_interpolated_pixels_excluded(self):
        k = intrinsics_from_fov(8, 8, math.radians(90.0), math.radians(90.0))
        pts = []
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                u, v = 4 + dc + 0.5, 4 + dr + 0.5
                pts.append(((u - k.c_u) * 5 / k.f_u, (v - k.c_v) * 5 / k.f_v, 5.0))
        view = interpolate_gaps(render_view(PointCloud(pts), k))
        only_interp = np.zeros(view.shape, dtype=bool)
        only_interp[4, 4] = True
        assert view.interpolated[4, 4]
        indices, coords = changed_points(only_interp, view, PointCloud(pts))
        assert indices.size == 0 and coords.shape == (0, 3)

    def test_full_valid_mask_recovers_rendered_points(self):
        rng = np.random.default_rng(42)
        cloud = PointCloud(rng.normal(scale=4.0, size=(500, 3)))
        view = render_view(cloud, K_SMALL)
        indices, coords = changed_points(view.valid, view, cloud)
        expect = np.sort(view.point_index[view.valid])
        np.testing.assert_array_equal(np.sort(indices), expect)
        np.testing.assert_array_equal(coords, cloud.xyz[indices])


class TestSummarize:
    def test_single_point(self):
        c, box = summarize([[1.0, 2.0, 3.0]])
        np.testing.assert_array_equal(c, (1.0, 2.0, 3.0))
        np.testing.assert_array_equal(box[0], box[1])

    def test_two_points(self):
        c, box = summarize([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        np.testing.assert_array_equal(c, (1.0, 0.0, 0.0))
        np.testing.assert_array_equal(box, [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])

    def test_random_against_oracle(self):
        rng = np.random.default_rng(43)
        pts = rng.normal(size=(100, 3))
        c, box = summarize(pts)
        np.testing.assert_allclose(c, pts.mean(axis=0))
        np.testing.assert_allclose(box[0], pts.min(axis=0))
        np.testing.assert_allclose(box[1], pts.max(axis=0))
        assert (pts >= box[0] - 1e-12).all() and (pts <= box[1] + 1e-12).all()

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            summarize(np.zeros((0, 3)))


def _candidate_with_points(pts):
    mask = np.ones((2, 2), dtype=bool)
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    if pts.shape[0]:
        centroid, aabb = summarize(pts)
    else:
        centroid, aabb = None, None
    return ChangeCandidate(
        live_mask=_bin(mask),
        best_map_iou=0.0,
        point_indices=np.arange(pts.shape[0]),
        points_3d=pts,
        centroid=centroid,
        aabb=aabb,
    )


class TestVerify3d:
    def test_coincident_points_fail(self):
        pts = np.random.default_rng(44).normal(size=(50, 3))
        cand = _candidate_with_points(pts)
        assert verify_3d(cand, pts, tau=0.3, rho=0.5) is False

    def test_distant_candidate_passes(self):
        cand = _candidate_with_points(np.full((10, 3), 5.0))
        assert verify_3d(cand, np.zeros((20, 3)), tau=0.3, rho=0.5) is True

    def test_fraction_boundary(self):
        # half the points exactly on map points, half 10 m away
        near = np.zeros((5, 3))
        far = np.full((5, 3), 10.0)
        cand = _candidate_with_points(np.vstack([near, far]))
        assert verify_3d(cand, np.zeros((7, 3)), tau=0.3, rho=0.5) is True
        assert verify_3d(cand, np.zeros((7, 3)), tau=0.3, rho=0.6) is False

    def test_no_points_never_verifies(self):
        cand = _candidate_with_points(np.zeros((0, 3)))
        assert verify_3d(cand, np.zeros((5, 3))) is False

    def test_matches_brute_force_fraction(self):
        rng = np.random.default_rng(45)
        for _ in range(10):
            cand_pts = rng.normal(scale=2.0, size=(40, 3))
            map_pts = rng.normal(scale=2.0, size=(60, 3))
            tau = float(rng.uniform(0.2, 1.5))
            rho = float(rng.uniform(0.1, 0.9))
            d = np.linalg.norm(
                cand_pts[:, None, :] - map_pts[None, :, :], axis=2
            ).min(axis=1)
            expect = (d > tau).mean() >= rho
            cand = _candidate_with_points(cand_pts)
            assert verify_3d(cand, map_pts, tau=tau, rho=rho) == expect


def _segment_distance_2d(p, a, b):
    p, a, b = np.asarray(p[:2]), np.asarray(a[:2]), np.asarray(b[:2])
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = max(0.0, min(1.0, float((p - a) @ ab) / denom))
    return float(np.linalg.norm(p - (a + t * ab)))


class TestCorridor:
    def _corridor(self):
        path = np.array([[0.0, 0.0, 0.0], [10.0, 0.0, 0.2], [10.0, 10.0, 0.1]])
        return Corridor(polyline=path, half_width=2.0)

    def test_vertex_is_inside(self):
        assert self._corridor().contains(np.array([[10.0, 0.0, 5.0]]))[0]

    def test_far_point_is_outside(self):
        assert not self._corridor().contains(np.array([[100.0, 0.0, 0.0]]))[0]

    def test_height_is_ignored(self):
        c = self._corridor()
        assert c.contains(np.array([[5.0, 1.0, 99.0]]))[0]

    def test_matches_segment_oracle(self):
        rng = np.random.default_rng(46)
        c = self._corridor()
        pts = rng.uniform(-5.0, 15.0, size=(200, 3))
        got = c.contains(pts)
        poly = c.polyline
        for i, p in enumerate(pts):
            d = min(
                _segment_distance_2d(p, poly[j], poly[j + 1])
                for j in range(len(poly) - 1)
            )
            assert got[i] == (d <= c.half_width)

    def test_filter_partitions(self):
        rng = np.random.default_rng(47)
        pts = rng.uniform(-5.0, 15.0, size=(100, 3))
        inside, outside = corridor_filter(pts, self._corridor())
        assert inside.shape[0] + outside.shape[0] == 100

    def test_validation(self):
        with pytest.raises(ValueError):
            Corridor(polyline=np.zeros((1, 3)), half_width=1.0)
        with pytest.raises(ValueError):
            Corridor(polyline=np.zeros((2, 3)), half_width=0.0)


class TestObstacleQueue:
    def test_first_candidate_creates_entry(self):
        q = ObstacleQueue()
        q.update([_candidate_with_points([[1.0, 1.0, 0.0]])], frame=0)
        assert len(q) == 1
        assert q.entries[0].hit_count == 1

    def test_reobservation_merges(self):
        q = ObstacleQueue(merge_radius=1.0)
        q.update([_candidate_with_points([[1.0, 1.0, 0.0]])], frame=0)
        q.update([_candidate_with_points([[1.2, 1.0, 0.0]])], frame=1)
        assert len(q) == 1
        entry = q.entries[0]
        assert entry.hit_count == 2
        np.testing.assert_allclose(entry.centroid, [1.1, 1.0, 0.0])
        assert entry.last_seen == 1

    def test_merge_takes_nearest_entry(self):
        q = ObstacleQueue(merge_radius=1.0)
        q.update([_candidate_with_points([[0.0, 0.0, 0.0]])], frame=0)
        q.update([_candidate_with_points([[1.5, 0.0, 0.0]])], frame=0)
        q.update([_candidate_with_points([[1.0, 0.0, 0.0]])], frame=1)
        hits = sorted(e.hit_count for e in q.entries)
        assert hits == [1, 2]
        assert q.entries[1].hit_count == 2  # the 1.5 entry was nearer

    def test_aabb_union_on_merge(self):
        q = ObstacleQueue()
        q.update([_candidate_with_points([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])], frame=0)
        # centroid (0.5, -0.4, 0.5) is 0.9 m from the entry: merges
        q.update([_candidate_with_points([[0.5, -0.4, 0.5]])], frame=1)
        assert len(q) == 1
        box = q.entries[0].aabb
        np.testing.assert_array_equal(box[0], [0.0, -0.4, 0.0])
        np.testing.assert_array_equal(box[1], [1.0, 1.0, 1.0])

    def test_ttl_eviction(self):
        q = ObstacleQueue(ttl_frames=3)
        q.update([_candidate_with_points([[0.0, 0.0, 0.0]])], frame=0)
        q.update([], frame=3)
        assert len(q) == 1  # age 3 = ttl, still alive
        q.update([], frame=4)
        assert len(q) == 0  # age 4 > ttl

    def test_capacity_evicts_oldest(self):
        q = ObstacleQueue(merge_radius=0.1, ttl_frames=100, capacity=3)
        for i in range(4):
            q.update([_candidate_with_points([[10.0 * i, 0.0, 0.0]])], frame=i)
        assert len(q) == 3
        xs = sorted(e.centroid[0] for e in q.entries)
        assert xs == [10.0, 20.0, 30.0]  # the frame-0 entry fell off

    def test_candidates_without_points_ignored(self):
        q = ObstacleQueue()
        q.update([_candidate_with_points(np.zeros((0, 3)))], frame=0)
        assert len(q) == 0


class TestCandidateJson:
    def test_fields(self):
        cand = _candidate_with_points([[1.0, 2.0, 3.0]])
        blob = candidate_to_json(cand)
        assert set(blob) == {"iou", "verified", "centroid", "aabb", "n_points", "in_corridor"}
        assert blob["n_points"] == 1
        assert blob["centroid"] == [1.0, 2.0, 3.0]

    def test_pointless_candidate_serializes(self):
        blob = candidate_to_json(_candidate_with_points(np.zeros((0, 3))))
        assert blob["centroid"] is None and blob["aabb"] is None


class TestAttachPoints:
    def test_attach_fills_summary(self):
        cloud = PointCloud([[0.0, 0.0, 5.0], [0.5, 0.2, 6.0]])
        view = render_view(cloud, K_SMALL)
        cand = ChangeCandidate(live_mask=_bin(view.valid), best_map_iou=0.0)
        out = attach_points(cand, view, cloud)
        assert out.n_points == 2
        np.testing.assert_allclose(out.centroid, cloud.xyz.mean(axis=0))

    def test_attach_empty_mask(self):
        cloud = PointCloud([[0.0, 0.0, 5.0]])
        view = render_view(cloud, K_SMALL)
        cand = ChangeCandidate(
            live_mask=_bin(np.zeros(view.shape, bool)), best_map_iou=0.0
        )
        out = attach_points(cand, view, cloud)
        assert out.n_points == 0 and out.centroid is None
