import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from headsplat import tensor as T
from headsplat.camera import Camera
from headsplat.gsdecode import GaussianCloud
from headsplat.splat import ALPHA_MAX, project, render_cloud, render_oracle, render_tiled
from headsplat.splat.project import LOW_PASS, quat_to_rotmat
from headsplat.tensor import Tensor

from conftest import check_grads


def _camera(h=16, w=16, pos=(0.0, 0.0, 4.0)):
    return Camera(pos, (0.0, 0.0, 0.0), (0.0, 1.0, 0.0), 40.0, h, w)


def _cloud(n, seed, spread=0.8, scale=(0.04, 0.25), opacity=(0.1, 0.95)):
    r = np.random.default_rng(seed)
    q = r.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return (r.uniform(-spread, spread, (n, 3)), r.uniform(*scale, (n, 3)), q,
            r.uniform(*opacity, n), r.uniform(0, 1, (n, 3)))


class TestProjection:
    def test_isotropic_at_origin(self):
        cam = _camera()
        s = 0.1
        proj = project(np.zeros((1, 3)), np.full((1, 3), s), np.array([[1.0, 0, 0, 0]]), np.ones(1), np.ones((1, 3)),
                       cam)
        var = (cam.focal * s / 4.0) ** 2 + LOW_PASS
        np.testing.assert_allclose(proj.geom.data[0], [8.0, 8.0, var, 0.0, var], atol=1e-12)
        assert proj.depth[0] == pytest.approx(4.0)

    def test_image_axes(self):
        # +X world is camera-right for the front camera; +Y world is up, so v decreases
        cam = _camera()
        pts = np.array([[0.5, 0.0, 0.0], [0.0, 0.5, 0.0]])
        g = project(pts, np.full((2, 3), 0.1), np.tile([1.0, 0, 0, 0], (2, 1)), np.ones(2), np.ones((2, 3)),
                    cam).geom.data
        assert g[0, 0] > 8 and g[0, 1] == pytest.approx(8)
        assert g[1, 1] < 8 and g[1, 0] == pytest.approx(8)

    def test_near_culling(self):
        cam = _camera()
        pts = np.array([[0.0, 0.0, 4.0], [0.0, 0.0, 5.0], [0.0, 0.0, 0.0]])
        proj = project(pts, np.full((3, 3), 0.1), np.tile([1.0, 0, 0, 0], (3, 1)), np.ones(3), np.ones((3, 3)), cam)
        assert proj.valid.tolist() == [False, False, True]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_rotation_matches_scipy(self, seed):
        q = np.random.default_rng(seed).normal(size=(3, 4))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        ref = Rotation.from_quat(q[:, [1, 2, 3, 0]]).as_matrix()
        np.testing.assert_allclose(quat_to_rotmat(q), ref, atol=1e-12)

    def test_gradients(self, float64):
        cam = _camera()
        pos, scale, quat, _, _ = _cloud(6, 0)

        def fn(p, s, q):
            return project(p, s, q, np.ones(6), np.ones((6, 3)), cam).geom

        for err in check_grads(fn, [pos, scale, quat]):
            assert err < 1e-3


class TestRaster:
    def test_empty_cloud_is_background(self):
        proj = project(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0), np.zeros((0, 3)),
                       _camera())
        img, alpha = render_tiled(proj, 16, 16, (0.2, 0.4, 0.6))
        assert np.all(img.data == np.array([0.2, 0.4, 0.6])) and np.all(alpha == 0)

    def test_opaque_point_capped(self):
        pos, scale = np.zeros((1, 3)), np.full((1, 3), 0.3)
        # odd extent puts the optical axis on a pixel center
        proj = project(pos, scale, np.array([[1.0, 0, 0, 0]]), np.ones(1), np.zeros((1, 3)), _camera(15, 15))
        img, alpha = render_tiled(proj, 15, 15)
        assert alpha.max() == pytest.approx(ALPHA_MAX)
        assert img.data.min() == pytest.approx(1 - ALPHA_MAX)

    def test_compact_support(self):
        # a small Gaussian leaves distant pixels exactly at the background
        proj = project(np.zeros((1, 3)), np.full((1, 3), 0.02), np.array([[1.0, 0, 0, 0]]), np.ones(1),
                       np.zeros((1, 3)), _camera(33, 33))
        img, alpha = render_tiled(proj, 33, 33)
        assert alpha[0, 0] == 0 and alpha[16, 16] > 0.5

    @pytest.mark.parametrize("seed", range(5))
    def test_tiled_matches_oracle(self, seed):
        cam = _camera(32, 32)
        proj = project(*_cloud(120, seed), cam)
        a = render_tiled(proj, 32, 32, tile=8)[0].data
        b = render_oracle(proj, 32, 32)[0].data
        assert np.abs(a - b).max() < 1e-5

    def test_tile_size_irrelevant(self):
        cam = _camera(24, 24)
        proj = project(*_cloud(60, 3), cam)
        ref = render_tiled(proj, 24, 24, tile=1)[0].data
        for tile in (3, 4, 16, 64):
            np.testing.assert_allclose(render_tiled(proj, 24, 24, tile=tile)[0].data, ref, atol=1e-12)

    def test_point_order_invariant(self):
        cam = _camera(32, 32)
        cloud = _cloud(200, 4)
        perm = np.random.default_rng(0).permutation(200)
        a = render_tiled(project(*cloud, cam), 32, 32)[0].data
        b = render_tiled(project(*(x[perm] for x in cloud), cam), 32, 32)[0].data
        np.testing.assert_array_equal(a, b)

    def test_bad_tile(self):
        proj = project(*_cloud(3, 0), _camera())
        with pytest.raises(ValueError, match="tile"):
            render_tiled(proj, 16, 16, tile=0)

    def test_front_occludes_back(self):
        # an opaque red point in front hides a blue point behind it
        pos = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
        cloud = GaussianCloud(Tensor(pos), Tensor(np.full((2, 3), 0.3)), Tensor(np.tile([1.0, 0, 0, 0], (2, 1))),
                              Tensor(np.ones(2)), Tensor(np.array([[1.0, 0, 0], [0, 0, 1.0]])))
        img = render_cloud(cloud, _camera(15, 15))[0].data
        assert img[7, 7, 0] > 0.99 and img[7, 7, 2] < 0.01


class TestRasterGradients:
    def _fn(self, cam, method):
        def fn(pos, scale, quat, opacity, color):
            cloud = GaussianCloud(pos, scale, quat, opacity, color)
            return render_cloud(cloud, cam, background=(0.3, 0.5, 0.7), tile=4, method=method)[0]
        return fn

    @pytest.mark.parametrize("seed", [0, 1])
    def test_tiled_finite_differences(self, float64, seed):
        cam = _camera()
        inputs = list(_cloud(12, seed, scale=(0.1, 0.3), opacity=(0.2, 0.8)))
        for err in check_grads(self._fn(cam, "tiled"), inputs, seed=seed):
            assert err < 5e-3

    def test_tiled_gradient_matches_oracle_gradient(self, float64):
        cam = _camera()
        inputs = _cloud(20, 7)
        w = np.random.default_rng(1).normal(size=(16, 16, 3))
        grads = []
        for method in ("tiled", "oracle"):
            ts = [Tensor(x, requires_grad=True) for x in inputs]
            T.sum_(self._fn(cam, method)(*ts) * w).backward()
            grads.append([t.grad for t in ts])
        for a, b in zip(*grads):
            np.testing.assert_allclose(a, b, atol=1e-6 * max(1.0, np.abs(b).max()))
