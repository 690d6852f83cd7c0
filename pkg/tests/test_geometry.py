import numpy as np
import pytest

from flashsep.errors import DataError
from flashsep.geometry import (
    CameraMotion,
    apply_homography,
    depth_reproject_flow,
    estimate_homography,
    find_correspondences,
    homography_to_flow,
    invert_flow,
    normalize_homography,
    reprojection_errors,
    warp_by_flow,
)
from flashsep.metrics import psnr

from conftest import smooth_image


def random_homography(rng, scale=1e-2):
    h = np.eye(3)
    h[:2, :2] += rng.uniform(-scale, scale, (2, 2))
    h[:2, 2] = rng.uniform(-4, 4, 2)
    h[2, :2] = rng.uniform(-scale / 100, scale / 100, 2)
    return normalize_homography(h)


class TestWarpByFlow:
    def test_zero_flow_identity(self, rng):
        img = rng.random((8, 10)).astype(np.float32)
        out, valid = warp_by_flow(img, np.zeros((8, 10, 2), dtype=np.float32))
        assert np.array_equal(out, img)
        assert valid.all()

    def test_uniform_integer_shift(self, rng):
        img = rng.random((8, 10)).astype(np.float32)
        flow = np.zeros((8, 10, 2), dtype=np.float32)
        flow[:, :, 0] = 3
        out, valid = warp_by_flow(img, flow, boundary="zero")
        assert np.allclose(out[:, :7], img[:, 3:])
        assert not valid[:, 7:].any()
        assert valid[:, :7].all()
        assert np.all(out[:, 7:] == 0.0)

    def test_clamp_boundary_all_valid(self, rng):
        img = rng.random((8, 10)).astype(np.float32)
        flow = np.zeros((8, 10, 2), dtype=np.float32)
        flow[:, :, 0] = 3
        out, valid = warp_by_flow(img, flow, boundary="clamp")
        assert valid.all()
        assert np.allclose(out[:, 7:], img[:, -1:])

    def test_constant_image_preserved(self):
        img = np.full((16, 16), 0.4, dtype=np.float32)
        flow = np.full((16, 16, 2), 1.3, dtype=np.float32)
        out, valid = warp_by_flow(img, flow)
        assert np.allclose(out[valid], 0.4, atol=1e-6)

    def test_homography_round_trip_psnr(self, rng):
        img = smooth_image(96, 96, channels=1, seed=7)
        h = random_homography(rng)
        fwd = homography_to_flow(h, 96, 96)
        bwd = homography_to_flow(np.linalg.inv(h), 96, 96)
        once, _ = warp_by_flow(img, fwd, boundary="clamp")
        back, _ = warp_by_flow(once, bwd, boundary="clamp")
        interior = np.s_[8:-8, 8:-8]
        assert psnr(back[interior], img[interior]) >= 40.0

    def test_multichannel(self, rng):
        img = rng.random((6, 6, 3)).astype(np.float32)
        out, _ = warp_by_flow(img, np.zeros((6, 6, 2), dtype=np.float32))
        assert np.array_equal(out, img)

    def test_dimension_mismatch(self):
        with pytest.raises(DataError):
            warp_by_flow(np.zeros((4, 4)), np.zeros((5, 4, 2)))


class TestHomographyToFlow:
    def test_identity_gives_zero_flow(self):
        flow = homography_to_flow(np.eye(3), 7, 5)
        assert np.all(flow == 0.0)

    def test_pure_translation(self):
        h = np.array([[1, 0, 2.5], [0, 1, 0], [0, 0, 1]])
        flow = homography_to_flow(h, 6, 4)
        assert np.allclose(flow[:, :, 0], 2.5)
        assert np.allclose(flow[:, :, 1], 0.0)

    def test_projective_matches_direct_projection(self, rng):
        h = random_homography(rng)
        flow = homography_to_flow(h, 20, 15)
        for x, y in [(0, 0), (19, 0), (0, 14), (19, 14), (7, 9)]:
            proj = apply_homography(h, np.array([x, y], dtype=float))
            assert np.allclose(flow[y, x], proj - (x, y), atol=1e-5)

    def test_composition_consistency(self, rng):
        h1 = random_homography(rng)
        h2 = random_homography(rng)
        flow12 = homography_to_flow(h1 @ h2, 24, 24)
        xx, yy = np.meshgrid(np.arange(24.0), np.arange(24.0))
        pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
        direct = apply_homography(h1 @ h2, pts)
        two_step = apply_homography(h1, apply_homography(h2, pts))
        assert np.abs(direct - two_step).max() < 0.01
        endpoint = pts + flow12.reshape(-1, 2)
        assert np.abs(endpoint - direct).max() < 0.01


class TestEstimateHomography:
    def test_identity_correspondences(self, rng):
        pts = rng.uniform(0, 100, (12, 2))
        h = estimate_homography(pts, pts)
        assert np.allclose(h, np.eye(3), atol=1e-10)

    def test_exact_recovery_from_four_pairs(self, rng):
        h_true = random_homography(rng)
        pts = np.array([[0, 0], [99, 3], [5, 95], [90, 90]], dtype=float)
        dst = apply_homography(h_true, pts)
        h = estimate_homography(pts, dst)
        assert reprojection_errors(h, pts, dst).max() < 1e-6

    @pytest.mark.parametrize("n", [4, 8, 50])
    def test_noiseless_exact_any_size(self, rng, n):
        h_true = random_homography(rng)
        pts = rng.uniform(0, 200, (n, 2))
        dst = apply_homography(h_true, pts)
        h = estimate_homography(pts, dst)
        assert reprojection_errors(h, pts, dst).max() <= 1e-8

    def test_ransac_with_outliers(self, rng):
        h_true = random_homography(rng)
        pts = rng.uniform(0, 300, (100, 2))
        dst = apply_homography(h_true, pts)
        n_out = 30
        idx = rng.choice(100, size=n_out, replace=False)
        offsets = rng.uniform(20, 60, (n_out, 2)) * rng.choice([-1, 1], (n_out, 2))
        dst[idx] += offsets
        h = estimate_homography(pts, dst, method="ransac_dlt",
                                inlier_threshold=2.0, seed=7)
        inlier_mask = np.ones(100, dtype=bool)
        inlier_mask[idx] = False
        err = reprojection_errors(h, pts[inlier_mask], dst[inlier_mask])
        assert err.max() < 0.5

    def test_ransac_deterministic(self, rng):
        pts = rng.uniform(0, 100, (30, 2))
        h_true = random_homography(rng)
        dst = apply_homography(h_true, pts)
        dst[:5] += 25
        h1 = estimate_homography(pts, dst, method="ransac_dlt", seed=3)
        h2 = estimate_homography(pts, dst, method="ransac_dlt", seed=3)
        assert np.array_equal(h1, h2)

    def test_too_few_pairs(self):
        with pytest.raises(DataError):
            estimate_homography(np.zeros((3, 2)), np.zeros((3, 2)))

    def test_degenerate_collinear(self):
        pts = np.array([[0, 0], [1, 1], [2, 2], [3, 3]], dtype=float)
        with pytest.raises(DataError):
            estimate_homography(pts, pts * 2)


class TestFindCorrespondences:
    def test_identical_images_zero_displacement(self):
        img = smooth_image(96, 96, channels=1, seed=13)
        pts_a, pts_b, scores = find_correspondences(img, img, search_radius=4)
        assert pts_a.shape[0] > 0
        assert np.array_equal(pts_a, pts_b)
        assert np.all(scores > 0.99)

    def test_known_shift_recovered(self):
        img = smooth_image(96, 96, channels=1, seed=14)
        shifted = np.zeros_like(img)
        shifted[:, :-5] = img[:, 5:]  # content moved 5 px left
        pts_a, pts_b, _ = find_correspondences(img, shifted, search_radius=7)
        assert pts_a.shape[0] > 0
        disp = pts_b - pts_a
        assert np.allclose(disp[:, 0], -5)
        assert np.allclose(disp[:, 1], 0)

    def test_flat_image_no_matches(self):
        flat = np.full((64, 64), 0.5, dtype=np.float32)
        pts_a, _, _ = find_correspondences(flat, flat)
        assert pts_a.shape[0] == 0


class TestDepthReprojectFlow:
    def test_zero_motion_zero_flow(self):
        flow, valid = depth_reproject_flow(np.ones((8, 8)), CameraMotion())
        assert np.all(flow == 0.0)
        assert valid.all()

    def test_pure_translation_closed_form(self):
        motion = CameraMotion(translation_mm=(5, 0, 0), focal_px=1000)
        flow, valid = depth_reproject_flow(np.ones((16, 16)), motion)
        assert valid.all()
        assert np.allclose(flow[:, :, 0], 5.0, atol=1e-9)
        assert np.allclose(flow[:, :, 1], 0.0, atol=1e-9)

    def test_magnitude_decreases_with_depth(self):
        motion = CameraMotion(translation_mm=(3, -2, 0), focal_px=800)
        mags = []
        for d in (0.5, 1.0, 2.0, 4.0):
            flow, _ = depth_reproject_flow(np.full((8, 8), d), motion)
            mags.append(np.hypot(flow[:, :, 0], flow[:, :, 1]).mean())
        assert all(a > b for a, b in zip(mags, mags[1:]))

    def test_near_displaces_twice_as_far(self):
        motion = CameraMotion(translation_mm=(5, 0, 0), focal_px=1000)
        near, _ = depth_reproject_flow(np.full((4, 4), 0.5), motion)
        far, _ = depth_reproject_flow(np.full((4, 4), 1.0), motion)
        assert np.allclose(near[:, :, 0], 2 * far[:, :, 0], atol=1e-9)

    def test_nonpositive_depth_rejected(self):
        with pytest.raises(DataError):
            depth_reproject_flow(np.zeros((4, 4)), CameraMotion())

    def test_rotation_limit_enforced(self):
        with pytest.raises(DataError):
            CameraMotion(rotation_deg=(6.0, 0, 0))


class TestInvertFlow:
    def test_inverse_undoes_homography_warp(self, rng):
        img = smooth_image(64, 64, channels=1, seed=17)
        h = random_homography(rng)
        flow = homography_to_flow(h, 64, 64)
        warped, _ = warp_by_flow(img, flow, boundary="clamp")
        inv = invert_flow(flow)
        back, _ = warp_by_flow(warped, inv, boundary="clamp")
        interior = np.s_[8:-8, 8:-8]
        assert psnr(back[interior], img[interior]) >= 38.0
