"""Rendering, ground-truth homography, blind-spot simulation, PGM codec."""

from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from earcam.errors import (
    BlindSpotNotFoundError,
    MalformedHeaderError,
    PlaneBehindCameraError,
    TruncatedPayloadError,
)
from earcam.geometry import HeadCameraRig, BlindSpotQuery, blind_spot_length
from earcam.imaging import (
    QQVGA,
    QVGA,
    FrameSpec,
    GrayImage,
    PlanarScene,
    decode_pgm,
    encode_pgm,
    ground_truth_homography,
    render_view,
    scene_from_json,
    scene_to_json,
    simulate_blind_spot,
)


def _project(rig: HeadCameraRig, side: str, pt, depth: float, spec: FrameSpec):
    # Direct pinhole projection of a scene-plane point, written without the
    # renderer's vectorized machinery: the oracle for every homography check.
    # Returns pixel-center coordinates (the column index plus 0.5), the
    # convention the homography operates in.
    sign = -1.0 if side == "left" else 1.0
    f = (spec.width / 2.0) / math.tan(math.radians(rig.phi_window / 2.0))
    yaw = math.radians(sign * rig.theta_yaw)
    cx = pt[0] - sign * rig.w_half_spacing
    cz = depth + rig.b_posterior
    xc = math.cos(yaw) * cx - math.sin(yaw) * cz
    zc = math.sin(yaw) * cx + math.cos(yaw) * cz
    u = f * xc / zc + spec.width / 2.0
    v = f * pt[1] / zc + spec.height / 2.0
    return u, v


class TestRender:
    def test_flat_scene_fills_covered_pixels(self, fitted_rig):
        scene = PlanarScene(pattern="flat:128", depth_from_eye=36.8)
        img = render_view(fitted_rig, "left", scene, QQVGA)
        arr = img.to_array()
        assert set(np.unique(arr)) <= {0, 128}
        assert (arr == 128).mean() > 0.95  # extent covers nearly the full view

    def test_coincident_cameras_render_identically(self):
        rig = HeadCameraRig(w_half_spacing=0.0, b_posterior=0.0, theta_yaw=0.0)
        scene = PlanarScene(pattern="mosaic:3", depth_from_eye=36.8)
        left = render_view(rig, "left", scene, QVGA)
        right = render_view(rig, "right", scene, QVGA)
        assert left.pixels == right.pixels

    def test_mirror_symmetry_bit_exact(self, rig5):
        # A flat scene with a centered object strip is midline symmetric, so
        # the left view must be the exact horizontal flip of the right one.
        scene = PlanarScene(
            pattern="flat:60", depth_from_eye=36.8, object_width=5.0
        )
        left = render_view(rig5, "left", scene, QVGA).to_array()
        right = render_view(rig5, "right", scene, QVGA).to_array()
        assert np.array_equal(left, np.fliplr(right))

    def test_rendering_deterministic(self, rig5, mosaic_scene, stereo_pair):
        again = render_view(rig5, "left", mosaic_scene, QVGA)
        assert again.pixels == stereo_pair[0].pixels

    def test_rays_missing_extent_render_zero(self, fitted_rig):
        scene = PlanarScene(
            pattern="flat:200", depth_from_eye=36.8, extent=(10.0, 8.0)
        )
        arr = render_view(fitted_rig, "left", scene, QVGA).to_array()
        assert (arr == 0).any()
        assert (arr == 200).any()

    def test_plane_behind_camera_raises(self, fitted_rig):
        scene = PlanarScene(pattern="flat:10", depth_from_eye=1.0)
        rig = dataclasses.replace(fitted_rig, b_posterior=-2.0)
        with pytest.raises(PlaneBehindCameraError):
            render_view(rig, "left", scene, QVGA)

    def test_side_name_validated(self, fitted_rig, mosaic_scene):
        with pytest.raises(ValueError):
            render_view(fitted_rig, "up", mosaic_scene, QVGA)

    def test_column_overlap_fraction_at_ten_degrees(self, fitted_rig):
        # Sweep a 1 cm probe strip across the scene; the fraction of probe
        # positions visible in both views over those visible in one view is
        # an image-space measurement of the shared-coverage column fraction
        # (normalized per single image, same convention as the tabulated
        # overlap percentages).
        rig = dataclasses.replace(fitted_rig, theta_yaw=10.0)
        both = single = 0
        for center in np.arange(-60.0, 60.0, 1.0):
            scene = PlanarScene(
                pattern="flat:0",
                depth_from_eye=36.8,
                object_width=1.0,
                object_center=float(center),
            )
            seen = [
                (render_view(rig, side, scene, QQVGA).to_array() == 255).any()
                for side in ("left", "right")
            ]
            single += seen[0]
            both += all(seen)
        assert both / single == pytest.approx(0.28, abs=0.04)


class TestGroundTruthHomography:
    def test_coincident_cameras_give_identity(self):
        rig = HeadCameraRig(w_half_spacing=0.0, b_posterior=0.0)
        h = ground_truth_homography(rig, 36.8, QVGA)
        assert np.abs(h - np.eye(3)).max() < 1e-12

    def test_zero_yaw_is_pure_horizontal_shift(self):
        # 4-point oracle: project four plane points through both cameras and
        # solve the exact linear system; at zero yaw the result must be a
        # translation by f*2w/(D+b) with every other term vanishing.
        rig = HeadCameraRig(w_half_spacing=9.0, b_posterior=5.0, theta_yaw=0.0)
        depth = 36.8
        f = (QVGA.width / 2.0) / math.tan(math.radians(32.5))
        shift = f * 2.0 * rig.w_half_spacing / (depth + rig.b_posterior)
        h = ground_truth_homography(rig, depth, QVGA)
        expected = np.eye(3)
        expected[0, 2] = shift
        assert np.abs(h - expected).max() < 1e-9
        # 4-point cross-check: the shift solved from projected point pairs
        # must agree with the closed form.
        pairs = []
        for pt in ((0.0, 0.0), (30.0, -20.0), (-25.0, 10.0), (12.0, 18.0)):
            ur, vr = _project(rig, "right", pt, depth, QVGA)
            ul, vl = _project(rig, "left", pt, depth, QVGA)
            assert vl == pytest.approx(vr, abs=1e-9)
            pairs.append(ul - ur)
        assert max(abs(d - shift) for d in pairs) < 1e-9

    def test_reprojection_of_random_plane_points(self, rig5):
        rng = np.random.default_rng(11)
        depth = 36.8
        h = ground_truth_homography(rig5, depth, QVGA)
        pts = rng.uniform(-40.0, 40.0, size=(100, 2))
        for pt in pts:
            ur, vr = _project(rig5, "right", pt, depth, QVGA)
            ul, vl = _project(rig5, "left", pt, depth, QVGA)
            q = h @ np.array([ur, vr, 1.0])
            assert abs(q[0] / q[2] - ul) < 1e-6
            assert abs(q[1] / q[2] - vl) < 1e-6

    def test_overlap_pixel_centers_map_consistently(self, rig5):
        # Every right-view pixel center that truth-maps into the left view
        # must land within 1e-6 px of the direct projection of its scene
        # point. Scene point from inverting the right camera's projection.
        depth = 36.8
        h = ground_truth_homography(rig5, depth, QVGA)
        f = (QVGA.width / 2.0) / math.tan(math.radians(32.5))
        yaw = math.radians(rig5.theta_yaw)
        ok = total = 0
        for v in range(0, QVGA.height, 7):
            for u in range(0, QVGA.width, 7):
                xc = (u + 0.5 - QVGA.width / 2.0) / f
                yc = (v + 0.5 - QVGA.height / 2.0) / f
                # right camera ray to the scene plane: world depth of a unit
                # camera-z step is cos(yaw) - xc*sin(yaw)
                denom = math.cos(yaw) - math.sin(yaw) * xc
                if denom <= 0.0:
                    continue
                zc = (depth + rig5.b_posterior) / denom
                x = (math.cos(yaw) * xc + math.sin(yaw)) * zc + rig5.w_half_spacing
                y = yc * zc
                ul, vl = _project(rig5, "left", (x, y), depth, QVGA)
                if not (0 <= ul < QVGA.width and 0 <= vl < QVGA.height):
                    continue
                total += 1
                q = h @ np.array([u + 0.5, v + 0.5, 1.0])
                ok += abs(q[0] / q[2] - ul) < 1e-6 and abs(q[1] / q[2] - vl) < 1e-6
        assert total > 200
        assert ok / total >= 0.99

    def test_depth_must_be_ahead_of_cameras(self, fitted_rig):
        with pytest.raises(PlaneBehindCameraError):
            ground_truth_homography(
                dataclasses.replace(fitted_rig, b_posterior=-5.0), 2.0, QVGA
            )


class TestSimulatedBlindSpot:
    @pytest.mark.parametrize("theta", [0.0, 5.0, 10.0])
    def test_agrees_with_analytic_within_three_percent(self, fitted_rig, theta):
        rig = dataclasses.replace(fitted_rig, theta_yaw=theta)
        analytic = blind_spot_length(rig)
        simulated = simulate_blind_spot(rig, step=0.1)
        assert abs(simulated - analytic) / analytic <= 0.03

    def test_result_within_one_step(self, fitted_rig):
        sim_fine = simulate_blind_spot(fitted_rig, step=0.05)
        sim_coarse = simulate_blind_spot(fitted_rig, step=0.5)
        assert abs(sim_coarse - sim_fine) <= 0.5 + 1e-9

    def test_never_visible_raises(self, fitted_rig):
        rig = dataclasses.replace(fitted_rig, theta_yaw=32.5)
        with pytest.raises(BlindSpotNotFoundError):
            simulate_blind_spot(rig, step=0.5)

    def test_step_precondition(self, fitted_rig):
        with pytest.raises(ValueError):
            simulate_blind_spot(fitted_rig, step=0.6)


class TestPgmCodec:
    def test_fixed_two_by_two_layout(self):
        img = GrayImage(FrameSpec(2, 2), bytes([0, 255, 17, 34]))
        assert encode_pgm(img) == b"P5\n2 2\n255\n" + bytes([0, 255, 17, 34])

    def test_round_trip_rendered_frame(self, stereo_pair):
        left = stereo_pair[0]
        blob = encode_pgm(left)
        back = decode_pgm(blob)
        assert back.spec == left.spec
        assert back.pixels == left.pixels
        assert encode_pgm(back) == blob

    def test_whitespace_and_comments_tolerated(self):
        blob = b"P5 # comment\n 2\t2 # again\n255\n" + bytes(4)
        img = decode_pgm(blob)
        assert img.spec == FrameSpec(2, 2)

    def test_truncated_payload(self):
        with pytest.raises(TruncatedPayloadError):
            decode_pgm(b"P5\n4 4\n255\n" + bytes(3))

    def test_malformed_headers(self):
        for blob in (
            b"P6\n2 2\n255\n" + bytes(4),  # wrong magic
            b"P5\n2 2\n256\n" + bytes(4),  # maxval out of byte range
            b"P5\n-2 2\n255\n",  # negative dimension
            b"P5\n2 2\n",  # header ends early
        ):
            with pytest.raises(MalformedHeaderError):
                decode_pgm(blob)

    @settings(deadline=None, max_examples=25)
    @given(
        w=st.integers(1, 40),
        h=st.integers(1, 40),
        seed=st.integers(0, 2**31 - 1),
    )
    def test_round_trip_random_images(self, w, h, seed):
        arr = np.random.default_rng(seed).integers(0, 256, size=(h, w), dtype=np.uint8)
        img = GrayImage.from_array(arr)
        assert decode_pgm(encode_pgm(img)) == img


class TestScenes:
    def test_json_round_trip(self, mosaic_scene):
        back = scene_from_json(scene_to_json(mosaic_scene))
        assert back == mosaic_scene

    def test_pattern_validation(self):
        with pytest.raises(ValueError):
            PlanarScene(pattern="plaid:3", depth_from_eye=36.8)
        with pytest.raises(ValueError):
            PlanarScene(pattern="checkerboard:0", depth_from_eye=36.8)
        with pytest.raises(ValueError):
            PlanarScene(pattern="mosaic:3", depth_from_eye=-1.0)

    def test_mosaic_reserves_zero_for_uncovered(self, stereo_pair):
        # shade 0 must remain the out-of-extent marker
        for img in stereo_pair:
            assert (img.to_array() > 0).all()

    def test_checkerboard_shades_stay_in_bands(self, fitted_rig):
        scene = PlanarScene(pattern="checkerboard:4", depth_from_eye=36.8)
        arr = render_view(fitted_rig, "left", scene, QVGA).to_array()
        vals = np.unique(arr)
        assert ((vals >= 195) & (vals <= 250) | (vals >= 5) & (vals <= 60)).all()
