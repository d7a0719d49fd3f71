"""Rasterizer: projection, SH color, blending, depth events, confidence."""

import numpy as np
import pytest

from conftest import frontal_camera, random_scene
from oracles import quat_to_rotmat, reference_depth, reference_render

from semsplat import (Camera, ContractError, GaussianScene, class_labels, eval_sh,
                      project_gaussian, render_confidence, render_depth, render_rgb)
from semsplat.render import LOWPASS, SH_C0, SH_C1, eval_sh_batch


def single_gaussian_scene(position, scale=(1.0, 1.0, 1.0), opacity=1.0,
                          quat=(1, 0, 0, 0), sh=None, basis=1):
    if sh is None:
        sh = np.zeros((1, 3, basis), dtype=np.float32)
    return GaussianScene(
        positions=np.array([position], dtype=np.float32),
        rotations=np.array([quat], dtype=np.float32),
        scales=np.array([scale], dtype=np.float32),
        opacities=np.array([opacity], dtype=np.float32),
        sh=np.asarray(sh, dtype=np.float32))


def tiny_camera():
    return Camera(width=4, height=4, fx=2.0, fy=2.0, cx=2.0, cy=2.0,
                  world_to_camera=np.eye(4))


class TestProjectGaussian:
    def test_isotropic_unit_covariance_hand_oracle(self):
        # camera-space (0, 0, 2), fx=fy=2 -> J = [[1,0,0],[0,1,0]], so
        # J W Sigma W^T J^T = I2 and the low-pass lands on the diagonal.
        scene = single_gaussian_scene([0, 0, 2])
        splat = project_gaussian(scene.gaussian(0), tiny_camera())
        np.testing.assert_allclose(splat.cov2d, (1.0 + LOWPASS) * np.eye(2), atol=1e-12)
        np.testing.assert_allclose(splat.mean2d, [2.0, 2.0], atol=1e-12)
        assert splat.depth == pytest.approx(2.0)

    def test_isotropic_invariant_under_camera_rotation(self):
        h = np.sqrt(2) / 2
        E = np.eye(4)
        E[:3, :3] = quat_to_rotmat([h, 0, 0, h])
        cam = Camera(width=4, height=4, fx=2.0, fy=2.0, cx=2.0, cy=2.0,
                     world_to_camera=E)
        scene = single_gaussian_scene([0, 0, 2])
        splat = project_gaussian(scene.gaussian(0), cam)
        np.testing.assert_allclose(splat.cov2d, (1.0 + LOWPASS) * np.eye(2), atol=1e-9)

    def test_behind_camera_culled(self):
        scene = single_gaussian_scene([0, 0, -1])
        assert project_gaussian(scene.gaussian(0), tiny_camera()) is None

    def test_off_image_culled(self):
        scene = single_gaussian_scene([50.0, 0, 2], scale=(0.01, 0.01, 0.01))
        assert project_gaussian(scene.gaussian(0), tiny_camera()) is None


class TestEvalSh:
    def test_degree0_constant(self):
        sh = np.zeros((3, 1))
        sh[:, 0] = [0.7, -0.2, 0.0]
        rgb = eval_sh(sh, np.array([0.0, 0.0, 1.0]))
        np.testing.assert_allclose(rgb, np.clip(np.array([0.7, -0.2, 0.0]) * SH_C0 + 0.5, 0, 1))

    def test_all_zero_coefficients_grey(self):
        rgb = eval_sh(np.zeros((3, 4)), np.array([0.0, 1.0, 0.0]))
        np.testing.assert_allclose(rgb, [0.5, 0.5, 0.5])

    def test_degree1_symmetric_about_dc(self, rng):
        # DERIVED oracle: explicit degree-1 basis evaluation
        sh = rng.uniform(-0.3, 0.3, size=(3, 4))
        up = eval_sh(sh, np.array([0.0, 0.0, 1.0]))
        down = eval_sh(sh, np.array([0.0, 0.0, -1.0]))
        dc = SH_C0 * sh[:, 0] + 0.5
        np.testing.assert_allclose(up + down, 2 * dc, atol=1e-12)
        expected_up = dc + SH_C1 * sh[:, 2]
        np.testing.assert_allclose(up, np.clip(expected_up, 0, 1), atol=1e-12)

    def test_rejects_non_unit_direction(self):
        with pytest.raises(ContractError):
            eval_sh(np.zeros((3, 1)), np.array([0.0, 0.0, 2.0]))

    def test_batch_matches_scalar(self, rng):
        sh = rng.uniform(-0.5, 0.5, size=(5, 3, 16))
        dirs = rng.standard_normal((5, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        batch = eval_sh_batch(sh, dirs)
        for i in range(5):
            np.testing.assert_allclose(batch[i], eval_sh(sh[i], dirs[i]), atol=1e-12)


class TestRenderRgb:
    def test_empty_scene_is_background(self):
        scene = GaussianScene(np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 3)),
                              np.zeros(0), np.zeros((0, 3, 1)))
        img = render_rgb(scene, frontal_camera(), background=(0.25, 0.5, 0.75))
        assert img.channels.shape == (40, 56, 3)
        np.testing.assert_allclose(img.channels[..., 0], 0.25)
        np.testing.assert_allclose(img.channels[..., 2], 0.75)
        np.testing.assert_allclose(img.alpha, 0.0)

    def test_two_coincident_splats_blend_per_formula(self):
        # pixel (8,8) center is (8.5, 8.5); put the mean exactly there so the
        # Gaussian factor is 1 and alpha equals the stored opacity.
        cam = Camera(width=16, height=16, fx=16.0, fy=16.0, cx=8.0, cy=8.0,
                     world_to_camera=np.eye(4))
        x = (8.5 - 8.0) * 2.0 / 16.0
        scene = GaussianScene(
            positions=np.array([[x, x, 2.0], [x, x, 2.0]], dtype=np.float32),
            rotations=np.array([[1, 0, 0, 0], [1, 0, 0, 0]], dtype=np.float32),
            scales=np.full((2, 3), 4.0, dtype=np.float32),
            opacities=np.array([0.5, 0.5], dtype=np.float32),
            sh=np.zeros((2, 3, 1), dtype=np.float32))
        conf = np.array([[1.0], [0.0]])
        img = render_confidence(scene, cam, conf)
        # front contributes 0.5*1, back 0.5*0.5*0 -> 0.5
        assert img.channels[8, 8, 0] == pytest.approx(0.5, abs=1e-9)
        assert img.alpha[8, 8] == pytest.approx(0.75, abs=1e-9)

    def test_matches_reference_renderer(self, rng):
        for trial in range(4):
            scene = random_scene(rng, int(rng.integers(50, 400)), sh_degree=int(rng.integers(0, 3)))
            cam = frontal_camera(rng=rng)
            img = render_rgb(scene, cam, background=(0.1, 0.2, 0.3))
            dirs = scene.positions.astype(np.float64) - cam.center
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            colors = eval_sh_batch(scene.sh, dirs)
            ref, ref_alpha = reference_render(scene, cam, colors,
                                              background=(0.1, 0.2, 0.3))
            assert np.abs(img.channels - ref).max() <= 1e-5
            assert np.abs(img.alpha - ref_alpha).max() <= 1e-5

    def test_alpha_in_unit_interval_and_rgb_bounded(self, rng):
        scene = random_scene(rng, 500, opacity_logits=(2.0, 6.0))
        img = render_rgb(scene, frontal_camera(rng=rng), background=(1.0, 1.0, 1.0))
        assert img.alpha.min() >= 0.0 and img.alpha.max() <= 1.0 + 1e-12
        assert img.channels.min() >= -1e-12 and img.channels.max() <= 1.0 + 1e-12

    def test_worker_count_does_not_change_output(self, rng):
        scene = random_scene(rng, 300)
        cam = frontal_camera(rng=rng)
        a = render_rgb(scene, cam, workers=1)
        b = render_rgb(scene, cam, workers=4)
        np.testing.assert_array_equal(a.channels, b.channels)
        np.testing.assert_array_equal(a.alpha, b.alpha)


class TestRenderDepth:
    def two_splat_scene(self, cam):
        # both means exactly on the pixel (8,8) center at depths 1 and 2
        pts = []
        for z in (1.0, 2.0):
            s = (8.5 - 8.0) * z / 16.0
            pts.append([s, s, z])
        return GaussianScene(
            positions=np.array(pts, dtype=np.float32),
            rotations=np.array([[1, 0, 0, 0], [1, 0, 0, 0]], dtype=np.float32),
            scales=np.full((2, 3), 4.0, dtype=np.float32),
            opacities=np.array([0.4, 0.9], dtype=np.float32),
            sh=np.zeros((2, 3, 1), dtype=np.float32))

    def test_hand_accumulation_example(self):
        cam = Camera(width=16, height=16, fx=16.0, fy=16.0, cx=8.0, cy=8.0,
                     world_to_camera=np.eye(4))
        scene = self.two_splat_scene(cam)
        # A_1 = 0.4 < 0.5; A_2 = 0.4 + 0.9*0.6 = 0.94 >= 0.5 -> second splat
        dm = render_depth(scene, cam, alpha_d=0.5)
        assert dm.depth[8, 8] == pytest.approx(2.0, abs=1e-12)
        assert dm.event_gaussian[8, 8] == 1
        # lower threshold stops at the first splat
        dm = render_depth(scene, cam, alpha_d=0.3)
        assert dm.depth[8, 8] == pytest.approx(1.0, abs=1e-12)
        assert dm.event_gaussian[8, 8] == 0

    def test_uncovered_pixel_invalid(self):
        cam = Camera(width=16, height=16, fx=16.0, fy=16.0, cx=8.0, cy=8.0,
                     world_to_camera=np.eye(4))
        scene = single_gaussian_scene([0, 0, 2], scale=(0.02, 0.02, 0.02))
        dm = render_depth(scene, cam, alpha_d=0.5)
        assert not dm.valid[0, 0]
        assert np.isinf(dm.depth[0, 0])

    def test_matches_scanline_oracle(self, rng):
        for _ in range(3):
            scene = random_scene(rng, int(rng.integers(40, 250)))
            cam = frontal_camera(rng=rng)
            dm = render_depth(scene, cam, alpha_d=0.5)
            ref_depth, ref_event = reference_depth(scene, cam, 0.5)
            np.testing.assert_array_equal(dm.event_gaussian, ref_event)
            assert np.allclose(dm.depth[dm.valid], ref_depth[np.isfinite(ref_depth)],
                               rtol=1e-12, atol=0)
            np.testing.assert_array_equal(dm.valid, np.isfinite(ref_depth))

    def test_monotone_in_alpha_d(self, rng):
        scene = random_scene(rng, 200, opacity_logits=(0.0, 5.0))
        cam = frontal_camera(rng=rng)
        prev = None
        for alpha_d in (0.1, 0.3, 0.5, 0.7, 0.9):
            dm = render_depth(scene, cam, alpha_d=alpha_d)
            if prev is not None:
                both = prev.valid & dm.valid
                assert (dm.depth[both] >= prev.depth[both]).all()
                # raising the threshold can only lose validity, not gain it
                assert not (dm.valid & ~prev.valid).any()
            prev = dm

    def test_rejects_bad_threshold(self, rng):
        scene = random_scene(rng, 5)
        with pytest.raises(ContractError):
            render_depth(scene, frontal_camera(), alpha_d=1.5)


class TestRenderConfidence:
    def test_single_opaque_splat_one_hot(self):
        cam = Camera(width=16, height=16, fx=16.0, fy=16.0, cx=8.0, cy=8.0,
                     world_to_camera=np.eye(4))
        x = (8.5 - 8.0) * 2.0 / 16.0
        scene = single_gaussian_scene([x, x, 2.0], scale=(4, 4, 4), opacity=0.95)
        img = render_confidence(scene, cam, np.array([[1.0, 0.0]]))
        labels = class_labels(img, min_alpha=0.5)
        assert labels[8, 8] == 0
        ratio = img.channels[8, 8, 0] / img.alpha[8, 8]
        assert ratio == pytest.approx(1.0, abs=1e-12)

    def test_two_coincident_splats_argmax(self):
        cam = Camera(width=16, height=16, fx=16.0, fy=16.0, cx=8.0, cy=8.0,
                     world_to_camera=np.eye(4))
        x = (8.5 - 8.0) * 2.0 / 16.0
        scene = GaussianScene(
            positions=np.array([[x, x, 2.0], [x, x, 2.0]], dtype=np.float32),
            rotations=np.array([[1, 0, 0, 0], [1, 0, 0, 0]], dtype=np.float32),
            scales=np.full((2, 3), 4.0, dtype=np.float32),
            opacities=np.array([0.5, 0.5], dtype=np.float32),
            sh=np.zeros((2, 3, 1), dtype=np.float32))
        img = render_confidence(scene, cam, np.array([[1.0, 0.0], [0.0, 1.0]]))
        np.testing.assert_allclose(img.channels[8, 8], [0.5, 0.25], atol=1e-9)
        assert class_labels(img)[8, 8] == 0

    def test_reproduces_rgb_path_with_color_channels(self, rng):
        scene = random_scene(rng, 150, sh_degree=1)
        cam = frontal_camera(rng=rng)
        dirs = scene.positions.astype(np.float64) - cam.center
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        colors = eval_sh_batch(scene.sh, dirs)
        via_conf = render_confidence(scene, cam, colors)
        via_rgb = render_rgb(scene, cam, background=(0, 0, 0))
        np.testing.assert_array_equal(via_conf.channels, via_rgb.channels)

    def test_dimension_mismatch_rejected(self, rng):
        scene = random_scene(rng, 10)
        with pytest.raises(ContractError):
            render_confidence(scene, frontal_camera(), np.ones((5, 2)))
