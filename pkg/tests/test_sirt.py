import numpy as np
import pytest
from scipy import sparse

from latentwave import projector as pj
from latentwave import baselines as sirt_mod
from latentwave.errors import ConfigError
from latentwave.metrics import ssim_value


def ellipse_phantom(n=64):
    ys, xs = np.mgrid[0:n, 0:n] + 0.5
    img = np.zeros((n, n))
    c = n / 2.0
    outer = ((xs - c) / (0.45 * n)) ** 2 + ((ys - c) / (0.4 * n)) ** 2 <= 1.0
    inner = ((xs - c) / (0.38 * n)) ** 2 + ((ys - c) / (0.33 * n)) ** 2 <= 1.0
    blob = ((xs - 0.62 * n) / (0.08 * n)) ** 2 + ((ys - 0.45 * n) / (0.12 * n)) ** 2 <= 1.0
    img[outer] = 1.0
    img[inner] = 0.35
    img[blob] = 0.8
    return img


class TestSirtCore:
    def test_hand_system_one_iteration(self):
        mat = sparse.csr_matrix(np.array([[1.0, 0.0], [1.0, 1.0]]))
        res = sirt_mod.sirt_system(mat, np.array([1.0, 3.0]), iters=1, omega=1.0,
                                   clamp_nonnegative=False)
        np.testing.assert_allclose(res.image, [1.25, 1.5])

    def test_zero_sinogram_fixed_point(self):
        mat = sparse.csr_matrix(np.array([[1.0, 0.0], [1.0, 1.0]]))
        res = sirt_mod.sirt_system(mat, np.zeros(2), iters=10, omega=1.0)
        assert not res.image.any()
        assert all(r == 0.0 for r in res.residuals)

    def test_consistent_start_is_fixed_point(self):
        rng = np.random.default_rng(0)
        dense = rng.uniform(0, 1, (12, 6))
        mat = sparse.csr_matrix(dense)
        x_bar = rng.uniform(0, 1, 6)
        p = mat @ x_bar
        res = sirt_mod.sirt_system(mat, p, iters=20, omega=1.0, x0=x_bar)
        np.testing.assert_allclose(res.image, x_bar, rtol=1e-10, atol=1e-12)

    def test_null_ray_excluded(self):
        mat = sparse.csr_matrix(np.array([[1.0, 1.0], [0.0, 0.0]]))
        res = sirt_mod.sirt_system(mat, np.array([2.0, 5.0]), iters=5, omega=1.0)
        assert np.all(np.isfinite(res.image))

    def test_uncovered_pixel_frozen(self):
        mat = sparse.csr_matrix(np.array([[1.0, 0.0], [2.0, 0.0]]))
        res = sirt_mod.sirt_system(mat, np.array([1.0, 2.0]), iters=8, omega=1.0)
        assert res.image[1] == 0.0

    def test_omega_range(self):
        mat = sparse.csr_matrix(np.eye(2))
        with pytest.raises(ConfigError):
            sirt_mod.sirt_system(mat, np.zeros(2), omega=2.0)
        with pytest.raises(ConfigError):
            sirt_mod.sirt_system(mat, np.zeros(2), iters=0)

    def test_all_zero_matrix_rejected(self):
        mat = sparse.csr_matrix((3, 4))
        with pytest.raises(ConfigError):
            sirt_mod.sirt_system(mat, np.zeros(3))


class TestSirtReconstruction:
    def test_monotone_residual_and_quality(self):
        phantom = ellipse_phantom(64)
        geo = pj.parallel_geometry((64, 64), views=60, detectors=128)
        sino = pj.radon_project(phantom, geo)
        res = sirt_mod.sirt(sino, grid_shape=(64, 64), iters=60, omega=1.0)
        r = res.residuals
        for k in range(50):
            assert r[k + 1] <= r[k] * (1 + 1e-12), f"residual increased at iteration {k}"
        assert ssim_value(res.image, phantom, data_range=1.0) > 0.6

    def test_residual_log_length(self):
        phantom = ellipse_phantom(32)
        geo = pj.parallel_geometry((32, 32), views=20, detectors=48)
        sino = pj.radon_project(phantom, geo)
        res = sirt_mod.sirt(sino, grid_shape=(32, 32), iters=12)
        assert len(res.residuals) == 13
