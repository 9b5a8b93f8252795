import math

import numpy as np
import pytest

import gyrofuse as gf
from gyrofuse.gyro_field import homography_from_quat, interpolate_patch_orientation

from conftest import constant_log, dense_log

K = gf.CameraIntrinsics(fx=500.0, fy=500.0, cx=300.0, cy=400.0)


def naive_field_oracle(array: gf.HomographyArray) -> np.ndarray:
    """Per-pixel double loop applying the row's homography with scalar math."""
    out = np.empty((array.height, array.width, 2))
    for y in range(array.height):
        h = array.patches[array.patch_of_row(y)]
        h00, h01, h02 = h[0]
        h10, h11, h12 = h[1]
        h20, h21, h22 = h[2]
        for x in range(array.width):
            w = h20 * x + h21 * y + h22
            out[y, x, 0] = (h00 * x + h01 * y + h02) / w - x
            out[y, x, 1] = (h10 * x + h11 * y + h12) / w - y
    return out


class TestGlobalHomography:
    def test_identity_rotation(self):
        h = gf.global_homography(K, np.eye(3))
        assert np.array_equal(h, np.eye(3))

    def test_inverse_rotation_composes_to_identity(self):
        r = gf.rodrigues((0.02, -0.03, 0.01))
        h = gf.global_homography(K, r) @ gf.global_homography(K, r.T)
        h /= h[2, 2]
        assert np.max(np.abs(h - np.eye(3))) < 1e-9

    def test_small_yaw_displacement_at_principal_point(self):
        theta = 0.01
        h = gf.global_homography(K, gf.rodrigues((0.0, theta, 0.0)))
        p = h @ np.array([K.cx, K.cy, 1.0])
        p /= p[2]
        dx = p[0] - K.cx
        dy = p[1] - K.cy
        assert abs(abs(dx) - K.fx * math.tan(theta)) < 0.01
        assert abs(dy) < 1e-9

    def test_rejects_non_rotation(self):
        with pytest.raises(ValueError):
            gf.global_homography(K, np.diag([1.0, 2.0, 1.0]))


class TestBuildHomographyArray:
    def test_zero_rate_gives_identity_patches(self):
        log = constant_log((0.0, 0.0, 0.0), 0.12)
        timing = gf.FrameTiming(20_000_000, 53_000_000, 25_000_000)
        array = gf.build_homography_array(log, timing, K, 600, 800, 14)
        assert array.patch_count == 14
        for patch in array.patches:
            assert np.max(np.abs(patch - np.eye(3))) < 1e-12

    def test_global_shutter_degenerates_to_single_homography(self):
        log = dense_log(lambda t: (0.3 * math.sin(40 * t), 0.5, 0.1), 0.12)
        timing = gf.FrameTiming(20_000_000, 53_000_000, 0)
        array = gf.build_homography_array(log, timing, K, 320, 240, 14)
        t0 = log[0].timestamp_ns
        q_a = gf.integrate_gyro(log, t0, 20_000_000)
        q_b = gf.integrate_gyro(log, t0, 53_000_000)
        q_rel = gf.quat_multiply(q_b, q_a.conjugate()).canonical()
        h_global = homography_from_quat(K, q_rel)
        for patch in array.patches:
            assert np.array_equal(patch, h_global)

    def test_ramping_rate_gives_monotonic_patch_angles(self):
        # Rate ramps linearly, so the rotation accumulated over each patch's
        # [t_a(n), t_b(n)] window grows strictly with n.  The oracle integrates
        # the scalar rate over the window in closed form.
        slope = 8.0  # rad/s per s
        rate_hz = 1000.0
        log = dense_log(lambda t: (0.0, 0.0, slope * t), 0.2, rate_hz)
        start_a, start_b, readout = 20_000_000, 53_000_000, 25_000_000
        timing = gf.FrameTiming(start_a, start_b, readout)
        height = 280
        array = gf.build_homography_array(log, timing, K, 320, height, 14)
        angles = [
            2.0 * math.acos(min(1.0, abs(q.w))) for q in array.rotations
        ]
        assert all(b > a for a, b in zip(angles, angles[1:]))

        dt_s = 1.0 / rate_hz
        for n, angle in enumerate(angles):
            start, end = array.patch_row_span(n)
            center = (start + end - 1) / 2.0
            t_a = (start_a + readout * center / (height - 1)) * 1e-9
            t_b = (start_b + readout * center / (height - 1)) * 1e-9
            # Zero-order hold: the sample rate steps at each sample boundary.
            grid_a = math.floor(t_a / dt_s)
            grid_b = math.floor(t_b / dt_s)
            expected = 0.0
            t = t_a
            for i in range(grid_a, grid_b + 1):
                seg_end = min((i + 1) * dt_s, t_b)
                expected += slope * (i * dt_s) * (seg_end - t)
                t = seg_end
                if t >= t_b:
                    break
            assert abs(angle - expected) < 1e-9

    def test_coverage_error_propagates(self):
        log = constant_log((0.0, 0.0, 0.1), 0.01)
        timing = gf.FrameTiming(20_000_000, 53_000_000, 25_000_000)
        with pytest.raises(gf.CoverageError):
            gf.build_homography_array(log, timing, K, 320, 240, 14)

    def test_patch_count_validation(self):
        log = constant_log((0.0, 0.0, 0.0), 0.12)
        timing = gf.FrameTiming(20_000_000, 53_000_000, 0)
        with pytest.raises(ValueError):
            gf.build_homography_array(log, timing, K, 320, 240, 0)
        with pytest.raises(ValueError):
            gf.build_homography_array(log, timing, K, 320, 240, 241)


class TestSmoothing:
    def test_constant_array_unchanged(self):
        log = constant_log((0.1, -0.2, 0.3), 0.12)
        timing = gf.FrameTiming(20_000_000, 53_000_000, 0)
        array = gf.build_homography_array(log, timing, K, 320, 240, 14)
        smoothed = gf.smooth_homography_array(array)
        assert smoothed.patch_count == 240
        for row_h in smoothed.patches:
            assert np.array_equal(row_h, array.patches[0])

    def test_two_patch_midpoint_is_half_rotation(self):
        q0 = gf.Quaternion.identity()
        q1 = gf.axis_angle_to_quat((0.0, 0.0, math.radians(10.0)))
        patches = np.stack([homography_from_quat(K, q0), homography_from_quat(K, q1)])
        array = gf.HomographyArray(patches, 320, 240, rotations=[q0, q1], intrinsics=K)
        centers = [array.patch_center_row(0), array.patch_center_row(1)]
        mid_row = 0.5 * (centers[0] + centers[1])
        q_mid = interpolate_patch_orientation(array, mid_row)
        expected = gf.axis_angle_to_quat((0.0, 0.0, math.radians(5.0)))
        assert q_mid.angle_to(expected) < 1e-12

    def test_patch_centers_reproduce_input_rotations(self):
        log = dense_log(lambda t: (0.2 * math.sin(30 * t), 0.4, 0.1 * t), 0.12, 500)
        timing = gf.FrameTiming(20_000_000, 53_000_000, 25_000_000)
        array = gf.build_homography_array(log, timing, K, 320, 240, 8)
        for n in range(array.patch_count):
            q = interpolate_patch_orientation(array, array.patch_center_row(n))
            assert q == array.rotations[n]

    def test_per_row_continuity(self):
        log = dense_log(lambda t: (0.3 * math.sin(40 * t), 0.5, 0.2), 0.12, 500)
        timing = gf.FrameTiming(20_000_000, 53_000_000, 25_000_000)
        array = gf.build_homography_array(log, timing, K, 320, 240, 14)
        smoothed = gf.smooth_homography_array(array)
        rows = smoothed.rotations
        max_patch_jump = max(
            array.rotations[n].angle_to(array.rotations[n + 1])
            for n in range(array.patch_count - 1)
        )
        bound = max_patch_jump / array.rows_per_patch() + 1e-9
        for a, b in zip(rows, rows[1:]):
            assert a.angle_to(b) < bound

    def test_smoothing_without_rotation_metadata(self):
        # Quaternions are recovered from K^-1 H K when not carried along.
        q = gf.axis_angle_to_quat((0.01, 0.02, -0.015))
        patches = np.stack([homography_from_quat(K, q)] * 4)
        array = gf.HomographyArray(patches, 64, 64, intrinsics=K)
        smoothed = gf.smooth_homography_array(array)
        assert np.max(np.abs(smoothed.patches - patches[0])) < 1e-9


class TestRasterize:
    def test_identity_array_is_zero_field(self):
        array = gf.HomographyArray(np.eye(3)[None], 64, 48)
        field = gf.rasterize_gyro_field(array)
        assert not np.any(field.vectors)
        assert field.valid is None

    def test_translation_homography_is_constant_field(self):
        h = np.array([[1.0, 0.0, 3.0], [0.0, 1.0, -2.0], [0.0, 0.0, 1.0]])
        array = gf.HomographyArray(h[None], 64, 48)
        field = gf.rasterize_gyro_field(array)
        assert np.array_equal(field.u, np.full((48, 64), 3.0))
        assert np.array_equal(field.v, np.full((48, 64), -2.0))

    def test_matches_naive_projection_oracle(self):
        log = dense_log(lambda t: (0.3 * math.sin(40 * t), 0.5, 0.2), 0.12, 500)
        timing = gf.FrameTiming(20_000_000, 53_000_000, 25_000_000)
        k64 = gf.CameraIntrinsics.default_for_size(64, 64)
        array = gf.smooth_homography_array(
            gf.build_homography_array(log, timing, k64, 64, 64, 8)
        )
        field = gf.rasterize_gyro_field(array)
        oracle = naive_field_oracle(array)
        assert np.max(np.abs(field.vectors - oracle)) < 1e-6

    def test_size_binding_enforced(self):
        array = gf.HomographyArray(np.eye(3)[None], 64, 48)
        with pytest.raises(ValueError):
            gf.rasterize_gyro_field(array, width=32, height=48)

    def test_rasterization_deterministic(self):
        log = dense_log(lambda t: (0.3 * math.sin(40 * t), 0.5, 0.2), 0.12, 500)
        timing = gf.FrameTiming(20_000_000, 53_000_000, 25_000_000)
        array = gf.smooth_homography_array(
            gf.build_homography_array(log, timing, K, 256, 256, 14)
        )
        f1 = gf.rasterize_gyro_field(array)
        f2 = gf.rasterize_gyro_field(array)
        assert np.array_equal(f1.vectors, f2.vectors)

    def test_global_shutter_bit_identical_to_single_homography(self):
        log = dense_log(lambda t: (0.3 * math.sin(40 * t), 0.5, 0.1), 0.12)
        timing = gf.FrameTiming(20_000_000, 53_000_000, 0)
        array = gf.build_homography_array(log, timing, K, 320, 240, 14)
        smoothed = gf.smooth_homography_array(array)
        field = gf.rasterize_gyro_field(smoothed)

        t0 = log[0].timestamp_ns
        q_a = gf.integrate_gyro(log, t0, 20_000_000)
        q_b = gf.integrate_gyro(log, t0, 53_000_000)
        q_rel = gf.quat_multiply(q_b, q_a.conjugate()).canonical()
        single = gf.HomographyArray(homography_from_quat(K, q_rel)[None], 320, 240)
        reference = gf.rasterize_gyro_field(single)
        assert np.array_equal(field.vectors, reference.vectors)

    def test_small_angle_composition(self):
        # Field of R2 resampled through R1's field, added to R1's field,
        # approximates the field of the composed rotation.
        k256 = gf.CameraIntrinsics.default_for_size(256, 256)
        r1 = (0.004, 0.010, 0.003)
        r2 = (-0.006, 0.008, -0.002)
        q1 = gf.axis_angle_to_quat(r1)
        q2 = gf.axis_angle_to_quat(r2)
        f1 = gf.rasterize_gyro_field(
            gf.HomographyArray(homography_from_quat(k256, q1)[None], 256, 256)
        )
        f2 = gf.rasterize_gyro_field(
            gf.HomographyArray(homography_from_quat(k256, q2)[None], 256, 256)
        )
        composed_q = gf.quat_multiply(q2, q1).canonical()
        f12 = gf.rasterize_gyro_field(
            gf.HomographyArray(homography_from_quat(k256, composed_q)[None], 256, 256)
        )
        # p -> H1 p -> H2 H1 p: sample f2 at the position f1 points to.
        f2_at_f1, _ = gf.warp_bilinear(f2.vectors, f1)
        combined = f1.vectors + f2_at_f1
        assert np.max(np.abs(combined - f12.vectors)) < 0.1


class TestDownscale:
    def test_constant_field(self):
        field = gf.FlowField.constant(16, 16, (4.0, 8.0))
        coarse = gf.downscale_field(field, 4)
        assert coarse.width == 4 and coarse.height == 4
        assert np.array_equal(coarse.u, np.full((4, 4), 1.0))
        assert np.array_equal(coarse.v, np.full((4, 4), 2.0))

    def test_zero_field_any_factor(self):
        field = gf.FlowField.zeros(20, 12)
        for factor in (1, 2, 4):
            coarse = gf.downscale_field(field, factor)
            assert not np.any(coarse.vectors)

    def test_linear_ramp_matches_closed_form(self):
        h, w = 8, 8
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        vec = np.stack([0.5 * xs, -0.25 * ys], axis=-1)
        coarse = gf.downscale_field(gf.FlowField(vec), 2)
        yc, xc = np.mgrid[0:4, 0:4].astype(np.float64)
        # Block mean of a ramp a*x over {2X, 2X+1} is a*(2X + 0.5); then / 2.
        expected_u = 0.5 * (2.0 * xc + 0.5) / 2.0
        expected_v = -0.25 * (2.0 * yc + 0.5) / 2.0
        assert np.max(np.abs(coarse.u - expected_u)) < 1e-9
        assert np.max(np.abs(coarse.v - expected_v)) < 1e-9

    def test_bad_factor_rejected(self):
        field = gf.FlowField.zeros(8, 8)
        with pytest.raises(ValueError):
            gf.downscale_field(field, 0)

    def test_odd_size_pads_to_ceil(self):
        field = gf.FlowField.constant(75, 75, (2.0, 2.0))
        coarse = gf.downscale_field(field, 2)
        assert (coarse.width, coarse.height) == (38, 38)
