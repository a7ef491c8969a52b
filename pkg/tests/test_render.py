"""Tests for virtual-camera rendering.

The z-buffer is checked against a brute-force oracle that projects every
point with scalar arithmetic and keeps, per pixel, the smallest depth (ties
to the lower point index). Colorization and interpolation are checked
against hand-computed pixels.
"""

import base64
import math

import numpy as np
import pytest

from laserchange.geom import PointCloud
from laserchange.render import (
    EQUIRECT,
    NO_POINT,
    PINHOLE,
    CameraIntrinsics,
    HsvImage,
    back_project,
    colorize,
    equirect_intrinsics,
    hsv_to_rgb,
    intensity_scale_for,
    interpolate_gaps,
    intrinsics_from_fov,
    project,
    render_equirect,
    render_view,
    view_to_json,
)

K_DEFAULT = intrinsics_from_fov(256, 128, math.radians(90.0), math.radians(45.0))


def _flat_view(ranges, intensities, valid):
    """Assemble a RenderedView directly from per-pixel arrays (H >= 2)."""
    from laserchange.render import RenderedView

    ranges = np.asarray(ranges, dtype=float)
    h, w = ranges.shape
    k = intrinsics_from_fov(w, h, 1.0, 1.0)
    valid = np.asarray(valid, dtype=bool)
    return RenderedView(
        intrinsics=k,
        model=PINHOLE,
        range_z=ranges,
        intensity=np.asarray(intensities, dtype=float),
        valid=valid,
        interpolated=np.zeros_like(valid),
        point_index=np.where(valid, 0, NO_POINT).astype(np.int64),
    )


def _brute_force_render(cloud, k, z_min=0.1):
    """Scalar-arithmetic oracle: pixel -> (depth, point index)."""
    best = {}
    for j in range(len(cloud)):
        x, y, z = cloud.xyz[j]
        if z <= z_min:
            continue
        col = math.floor(k.f_u * x / z + k.c_u)
        row = math.floor(k.f_v * y / z + k.c_v)
        if not (0 <= col < k.width and 0 <= row < k.height):
            continue
        key = (row, col)
        if key not in best or (z, j) < best[key]:
            best[key] = (z, j)
    return best


class TestIntrinsics:
    def test_paper_image_size(self):
        # 256 px over 90 deg: f_u = 256 / (2 tan 45 deg) = 128 exactly
        assert K_DEFAULT.f_u == 128.0
        assert K_DEFAULT.c_u == 128.0
        # 128 px over 45 deg: f_v = 64 / tan(22.5 deg) = 154.51...
        assert K_DEFAULT.f_v == pytest.approx(154.5097, abs=1e-3)
        assert K_DEFAULT.c_v == 64.0

    def test_unit_case(self):
        assert intrinsics_from_fov(2, 2, math.radians(90.0), math.radians(90.0)).f_u == 1.0

    def test_fov_domain(self):
        for bad in (0.0, math.pi, 3.5, -0.2):
            with pytest.raises(ValueError):
                intrinsics_from_fov(64, 64, bad, 1.0)
            with pytest.raises(ValueError):
                intrinsics_from_fov(64, 64, 1.0, bad)

    def test_principal_point_enforced(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(100.0, 100.0, 10.0, 32.0, 64, 64, 1.0, 1.0)

    def test_equirect_pixels_per_radian(self):
        k = equirect_intrinsics(360, 180, 2.0 * math.pi, math.pi)
        assert k.f_u == pytest.approx(360 / (2 * math.pi))
        assert k.f_v == pytest.approx(180 / math.pi)


class TestProject:
    def test_optical_axis(self):
        assert project(K_DEFAULT, (0.0, 0.0, 10.0)) == (128, 64)

    def test_hand_computed_offset(self):
        # u = 128 * 0.5 / 1.0 + 128 = 192.0 exactly, on the pixel boundary
        assert project(K_DEFAULT, (0.5, 0.0, 1.0)) == (192, 64)

    def test_behind_camera(self):
        assert project(K_DEFAULT, (1.0, 1.0, -2.0)) is None

    def test_outside_frustum(self):
        assert project(K_DEFAULT, (100.0, 0.0, 1.0)) is None

    def test_near_plane(self):
        assert project(K_DEFAULT, (0.0, 0.0, 0.05)) is None


class TestRenderView:
    def test_single_point_on_axis(self):
        view = render_view(PointCloud([[0.0, 0.0, 5.0]], [7.0]), K_DEFAULT)
        assert int(view.valid.sum()) == 1
        assert view.range_z[64, 128] == 5.0
        assert view.intensity[64, 128] == 7.0
        assert view.point_index[64, 128] == 0

    def test_nearest_point_wins(self):
        cloud = PointCloud([[0.0, 0.0, 10.0], [0.0, 0.0, 5.0]], [1.0, 2.0])
        view = render_view(cloud, K_DEFAULT)
        assert view.range_z[64, 128] == 5.0
        assert view.point_index[64, 128] == 1

    def test_depth_tie_keeps_lower_index(self):
        cloud = PointCloud([[0.0, 0.0, 5.0], [0.0, 0.0, 5.0]], [1.0, 2.0])
        view = render_view(cloud, K_DEFAULT)
        assert view.point_index[64, 128] == 0

    def test_empty_cloud(self):
        view = render_view(PointCloud(np.zeros((0, 3))), K_DEFAULT)
        assert not view.valid.any()
        assert (view.point_index == NO_POINT).all()

    def test_matches_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            n = int(rng.integers(50, 2000))
            xyz = rng.normal(scale=6.0, size=(n, 3))
            cloud = PointCloud(xyz, rng.uniform(size=n))
            view = render_view(cloud, K_DEFAULT)
            oracle = _brute_force_render(cloud, K_DEFAULT)
            got = {
                (r, c): (view.range_z[r, c], int(view.point_index[r, c]))
                for r, c in zip(*np.nonzero(view.valid))
            }
            assert set(got) == set(oracle)
            for key, (z, j) in oracle.items():
                assert got[key][1] == j
                assert got[key][0] == pytest.approx(z, rel=1e-12)

    def test_round_trip_by_construction(self):
        rng = np.random.default_rng(12)
        xyz = rng.normal(scale=5.0, size=(3000, 3))
        cloud = PointCloud(xyz)
        view = render_view(cloud, K_DEFAULT)
        rows, cols = np.nonzero(view.valid & ~view.interpolated)
        for r, c in zip(rows, cols):
            j = back_project(view, (int(c), int(r)))
            assert project(K_DEFAULT, cloud.xyz[j]) == (c, r)

    def test_arrays_readonly(self):
        view = render_view(PointCloud([[0.0, 0.0, 5.0]]), K_DEFAULT)
        with pytest.raises(ValueError):
            view.range_z[0, 0] = 1.0


class TestBackProject:
    def test_out_of_bounds_raises(self):
        view = render_view(PointCloud(np.zeros((0, 3))), K_DEFAULT)
        with pytest.raises(IndexError):
            back_project(view, (256, 0))

    def test_invalid_pixel_is_none(self):
        view = render_view(PointCloud(np.zeros((0, 3))), K_DEFAULT)
        assert back_project(view, (0, 0)) is None

    def test_interpolated_pixel_is_none(self):
        # ring of 8 points around a central hole, all at z=5
        k = intrinsics_from_fov(8, 8, math.radians(90.0), math.radians(90.0))
        pts = []
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                # center of pixel (4+dc, 4+dr) at z=5: x = (u+0.5-c_u) z/f_u
                u, v = 4 + dc + 0.5, 4 + dr + 0.5
                pts.append(((u - k.c_u) * 5 / k.f_u, (v - k.c_v) * 5 / k.f_v, 5.0))
        filled = interpolate_gaps(render_view(PointCloud(pts), k))
        assert filled.valid[4, 4] and filled.interpolated[4, 4]
        assert back_project(filled, (4, 4)) is None


class TestInterpolateGaps:
    def test_all_valid_unchanged(self):
        rng = np.random.default_rng(42)
        view = _flat_view(
            rng.uniform(1.0, 20.0, size=(6, 6)),
            rng.uniform(0.0, 50.0, size=(6, 6)),
            np.ones((6, 6), bool),
        )
        filled = interpolate_gaps(view)
        np.testing.assert_array_equal(filled.range_z, view.range_z)
        np.testing.assert_array_equal(filled.intensity, view.intensity)
        assert not filled.interpolated.any()

    def test_lone_hole_mean_of_neighbors(self):
        k = intrinsics_from_fov(8, 8, math.radians(90.0), math.radians(90.0))
        pts = []
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                u, v = 4 + dc + 0.5, 4 + dr + 0.5
                pts.append(((u - k.c_u) * 5 / k.f_u, (v - k.c_v) * 5 / k.f_v, 5.0))
        cloud = PointCloud(pts, intensity=np.full(8, 10.0))
        view = render_view(cloud, k)
        assert not view.valid[4, 4]
        filled = interpolate_gaps(view)
        # all eight neighbors were rendered at z=5... not exactly: their
        # camera z is 5 by construction, intensity 10, so the mean is exact
        assert filled.valid[4, 4]
        assert filled.range_z[4, 4] == pytest.approx(5.0)
        assert filled.intensity[4, 4] == pytest.approx(10.0)
        assert filled.point_index[4, 4] == NO_POINT

    def test_isolated_hole_stays_invalid(self):
        view = render_view(PointCloud([[0.0, 0.0, 5.0]]), K_DEFAULT)
        filled = interpolate_gaps(view)
        assert not filled.valid[0, 0]

    def test_single_pass_does_not_cascade(self):
        # valid column 0 only; column 1 gets filled, column 2 must not,
        # because fills from this pass do not seed further fills
        k = intrinsics_from_fov(8, 8, math.radians(90.0), math.radians(90.0))
        pts = []
        for row in range(8):
            u, v = 0.5, row + 0.5
            pts.append(((u - k.c_u) * 5 / k.f_u, (v - k.c_v) * 5 / k.f_v, 5.0))
        view = render_view(PointCloud(pts), k)
        assert view.valid[:, 0].all() and not view.valid[:, 1:].any()
        filled = interpolate_gaps(view)
        assert filled.valid[:, 1].all()
        assert not filled.valid[:, 2:].any()

    def test_mean_against_direct_computation(self):
        rng = np.random.default_rng(13)
        xyz = rng.normal(scale=4.0, size=(400, 3))
        cloud = PointCloud(xyz, rng.uniform(1.0, 20.0, size=400))
        k = intrinsics_from_fov(32, 32, math.radians(90.0), math.radians(90.0))
        view = render_view(cloud, k)
        filled = interpolate_gaps(view)
        for r in range(32):
            for c in range(32):
                if view.valid[r, c]:
                    assert filled.range_z[r, c] == view.range_z[r, c]
                    continue
                neigh = [
                    (view.range_z[rr, cc], view.intensity[rr, cc])
                    for rr in range(max(0, r - 1), min(32, r + 2))
                    for cc in range(max(0, c - 1), min(32, c + 2))
                    if (rr, cc) != (r, c) and view.valid[rr, cc]
                ]
                if not neigh:
                    assert not filled.valid[r, c]
                else:
                    assert filled.interpolated[r, c]
                    assert filled.range_z[r, c] == pytest.approx(
                        np.mean([n[0] for n in neigh])
                    )
                    assert filled.intensity[r, c] == pytest.approx(
                        np.mean([n[1] for n in neigh])
                    )


class TestColorize:
    def test_hue_endpoints_and_midpoint(self):
        ranges = np.tile([0.001, 15.0, 30.0, 45.0], (2, 1))
        view = _flat_view(ranges, np.ones((2, 4)), np.ones((2, 4), bool))
        hsv = colorize(view, max_range=30.0, intensity_scale=1.0)
        assert hsv.hue[0, 0] == 0
        assert abs(int(hsv.hue[0, 1]) - 128) <= 1
        assert hsv.hue[0, 2] == 255
        assert hsv.hue[0, 3] == 255  # clamped beyond max range

    def test_invalid_pixels_black(self):
        valid = np.array([[True, False], [True, True]])
        view = _flat_view(np.full((2, 2), 10.0), np.ones((2, 2)), valid)
        hsv = colorize(view, intensity_scale=1.0)
        np.testing.assert_array_equal(hsv.pixels[0, 1], (0, 0, 0))
        assert hsv.saturation[0, 0] == 255

    def test_monotone_in_range(self):
        rng = np.random.default_rng(14)
        ranges = np.tile(np.sort(rng.uniform(0.0, 40.0, size=64)), (2, 1))
        view = _flat_view(ranges, np.ones((2, 64)), np.ones((2, 64), bool))
        hue = colorize(view, intensity_scale=1.0).hue[0].astype(int)
        assert (np.diff(hue) >= 0).all()

    def test_value_channel_scaling(self):
        inten = np.tile([0.0, 50.0, 100.0, 300.0], (2, 1))
        view = _flat_view(np.full((2, 4), 5.0), inten, np.ones((2, 4), bool))
        hsv = colorize(view, intensity_scale=100.0)
        np.testing.assert_array_equal(hsv.value[0], (0, 128, 255, 255))

    def test_default_scale_is_high_percentile(self):
        rng = np.random.default_rng(15)
        inten = rng.uniform(0.0, 200.0, size=(4, 50))
        view = _flat_view(np.full((4, 50), 5.0), inten, np.ones((4, 50), bool))
        assert intensity_scale_for(view) == pytest.approx(np.percentile(inten, 98.0))
        # floor at 1.0 for dim frames
        dim = _flat_view(np.full((4, 50), 5.0), inten * 1e-4, np.ones((4, 50), bool))
        assert intensity_scale_for(dim) == 1.0

    def test_empty_view_scale(self):
        view = _flat_view(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2), bool))
        assert intensity_scale_for(view) == 1.0


class TestHsvToRgb:
    def test_primaries(self):
        hsv = np.array([[[0, 255, 255]]], dtype=np.uint8)
        np.testing.assert_array_equal(hsv_to_rgb(hsv)[0, 0], (255, 0, 0))

    def test_black_and_gray(self):
        hsv = np.array([[[100, 255, 0], [37, 0, 200]]], dtype=np.uint8)
        rgb = hsv_to_rgb(hsv)
        np.testing.assert_array_equal(rgb[0, 0], (0, 0, 0))
        np.testing.assert_array_equal(rgb[0, 1], (200, 200, 200))

    def test_hue_sectors_cover_wheel(self):
        # byte 85 is ~119.5 deg (green dominant), byte 170 ~239 deg (blue);
        # neither is an exact sector corner, so minor channels stay small
        hsv = np.array([[[85, 255, 255], [170, 255, 255]]], dtype=np.uint8)
        rgb = hsv_to_rgb(hsv)
        assert rgb[0, 0, 1] == 255 and rgb[0, 0, 2] == 0 and rgb[0, 0, 0] < 8
        assert rgb[0, 1, 2] == 255 and rgb[0, 1, 0] == 0 and rgb[0, 1, 1] < 8

    def test_png_round_trip(self, tmp_path):
        from PIL import Image

        rng = np.random.default_rng(16)
        hsv = HsvImage(rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8))
        path = tmp_path / "img.png"
        hsv.save_png(path)
        loaded = np.asarray(Image.open(path).convert("RGB"))
        np.testing.assert_array_equal(loaded, hsv.to_rgb())


class TestEquirect:
    def test_center_pixel(self):
        view = render_equirect(PointCloud([[0.0, 0.0, 5.0]]), 64, 32, 2.0, 1.0)
        assert view.valid[16, 32]
        assert view.range_z[16, 32] == 5.0

    def test_range_is_euclidean(self):
        view = render_equirect(PointCloud([[3.0, 0.0, 4.0]]), 64, 32, 3.0, 1.5)
        assert view.range_z[view.valid][0] == pytest.approx(5.0)

    def test_constant_angular_spacing(self):
        # three points at azimuths -0.5, 0, +0.5 rad with fov 2 rad over 64 px
        pts = [[math.sin(a), 0.0, math.cos(a)] for a in (-0.5, 0.0, 0.5)]
        view = render_equirect(PointCloud(np.array(pts) * 10), 64, 32, 2.0, 1.0)
        cols = sorted(np.nonzero(view.valid)[1])
        assert cols[1] - cols[0] == cols[2] - cols[1]

    def test_matches_angle_oracle(self):
        rng = np.random.default_rng(17)
        xyz = rng.normal(scale=8.0, size=(500, 3))
        cloud = PointCloud(xyz, rng.uniform(size=500))
        w, h, fov_h, fov_v = 128, 64, 2.0 * math.pi, math.pi
        view = render_equirect(cloud, w, h, fov_h, fov_v)
        best = {}
        for j in range(len(cloud)):
            x, y, z = cloud.xyz[j]
            r = math.sqrt(x * x + y * y + z * z)
            if r <= 0.1:
                continue
            col = math.floor((w / fov_h) * math.atan2(x, z) + w / 2) % w
            row = math.floor((h / fov_v) * math.asin(y / r) + h / 2)
            if not (0 <= row < h):
                continue
            key = (row, col)
            if key not in best or (r, j) < best[key]:
                best[key] = (r, j)
        got = {
            (r, c): int(view.point_index[r, c]) for r, c in zip(*np.nonzero(view.valid))
        }
        assert got == {k: v[1] for k, v in best.items()}

    def test_seam_wraps_at_full_circle(self):
        # azimuth exactly pi maps to continuous u = W, which wraps to col 0
        view = render_equirect(PointCloud([[0.0, 0.0, -5.0]]), 64, 32, 2.0 * math.pi, math.pi)
        assert view.valid[:, 0].any()

    def test_model_tag(self):
        view = render_equirect(PointCloud(np.zeros((0, 3))), 64, 32, 2.0, 1.0)
        assert view.model == EQUIRECT


class TestViewJson:
    def test_arrays_round_trip(self):
        rng = np.random.default_rng(18)
        cloud = PointCloud(rng.normal(scale=5.0, size=(200, 3)))
        view = render_view(cloud, K_DEFAULT)
        blob = view_to_json(view)
        rz = np.frombuffer(base64.b64decode(blob["range_z"]), dtype="<f4")
        np.testing.assert_array_equal(
            rz.reshape(view.shape), view.range_z.astype(np.float32)
        )
        assert blob["width"] == 256 and blob["height"] == 128
        assert blob["camera_pose"] is None
