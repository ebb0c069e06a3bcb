import numpy as np
import pytest
from numpy.testing import assert_allclose
from PIL import Image as PILImage

from pandaface.errors import SingularTransform
from pandaface.image import (AffineTransform, load_image, resize_to_height,
                             save_image, to_grayscale, warp_affine_bicubic)


def smooth_image(rng, h=60, w=72):
    """Band-limited test image: a few low-frequency cosines."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.full((h, w, 3), 128.0)
    for _ in range(4):
        fx, fy = rng.uniform(0.02, 0.06, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        wave = 30.0 * np.cos(2 * np.pi * (fx * xx + fy * yy) + phase)
        img += wave[:, :, None] * rng.uniform(0.3, 1.0, size=3)
    return np.clip(img, 0, 255)


class TestGrayscale:
    def test_all_white(self):
        img = np.full((5, 4, 3), 255.0)
        assert_allclose(to_grayscale(img), 255.0)

    def test_all_black(self):
        img = np.zeros((5, 4, 3))
        assert_allclose(to_grayscale(img), 0.0)

    def test_pure_red(self):
        img = np.zeros((2, 2, 3))
        img[0, 0] = (255, 0, 0)
        assert to_grayscale(img)[0, 0] == pytest.approx(0.299 * 255)

    def test_range_and_purity(self, rng):
        img = rng.uniform(0, 255, (16, 20, 3))
        g1 = to_grayscale(img)
        g2 = to_grayscale(img)
        assert g1.min() >= 0.0 and g1.max() <= 255.0
        assert np.array_equal(g1, g2)


class TestResize:
    def test_square_halved(self):
        img = np.zeros((200, 200, 3))
        out = resize_to_height(img, 100)
        assert out.shape == (100, 100, 3)

    def test_aspect_ratio(self):
        img = np.zeros((300, 150, 3))  # h=300, w=150
        out = resize_to_height(img, 100)
        assert out.shape == (100, 50, 3)

    def test_constant_preserved(self):
        img = np.full((37, 61, 3), 131.25)
        out = resize_to_height(img, 17)
        assert np.abs(out - 131.25).max() < 1e-6

    def test_min_width_one(self):
        img = np.zeros((50, 2, 3))
        out = resize_to_height(img, 10)
        assert out.shape[1] >= 1


class TestWarp:
    def test_identity_exact(self, rng):
        src = rng.uniform(0, 255, (40, 50, 3))
        out = warp_affine_bicubic(src, AffineTransform.identity(), 50, 40)
        assert np.abs(out - src).max() < 1e-6

    def test_integer_translation(self, rng):
        src = rng.uniform(0, 255, (30, 40, 3))
        xform = AffineTransform(np.eye(2), np.array([3.0, 0.0]))
        out = warp_affine_bicubic(src, xform, 40, 30)
        # output column c comes from src column c - 3
        assert_allclose(out[:, 3:, :], src[:, :-3, :], atol=1e-9)

    def test_zero_matrix_rejected(self):
        src = np.zeros((8, 8, 3))
        with pytest.raises(SingularTransform):
            warp_affine_bicubic(src, AffineTransform(np.zeros((2, 2)),
                                                     np.zeros(2)), 8, 8)

    def test_composition(self, rng):
        src = smooth_image(rng)
        h, w = src.shape[:2]
        a = AffineTransform(np.array([[1.05, 0.04], [-0.03, 0.97]]),
                            np.array([2.0, -1.5]))
        b = AffineTransform(np.array([[0.96, -0.05], [0.02, 1.06]]),
                            np.array([-1.0, 2.5]))
        two_step = warp_affine_bicubic(warp_affine_bicubic(src, a, w, h), b, w, h)
        one_step = warp_affine_bicubic(src, a.then(b), w, h)
        interior = (slice(8, h - 8), slice(8, w - 8))
        assert np.abs(two_step[interior] - one_step[interior]).max() < 2.0

    def test_clamped_range(self, rng):
        src = rng.uniform(0, 255, (20, 20, 3))
        xform = AffineTransform(np.array([[1.3, 0.2], [0.1, 0.8]]),
                                np.array([1.0, -2.0]))
        out = warp_affine_bicubic(src, xform, 25, 25)
        assert out.min() >= 0.0 and out.max() <= 255.0


class TestAffineTransform:
    def test_inverse_roundtrip(self, rng):
        xform = AffineTransform(np.array([[1.2, 0.1], [-0.05, 0.9]]),
                                np.array([5.0, -3.0]))
        pts = rng.uniform(-10, 10, (17, 2))
        back = xform.inverse().apply(xform.apply(pts))
        assert_allclose(back, pts, atol=1e-10)

    def test_then_matches_sequential(self, rng):
        a = AffineTransform(rng.normal(size=(2, 2)) + np.eye(2),
                            rng.normal(size=2))
        b = AffineTransform(rng.normal(size=(2, 2)) + np.eye(2),
                            rng.normal(size=2))
        pts = rng.uniform(-5, 5, (9, 2))
        assert_allclose(a.then(b).apply(pts), b.apply(a.apply(pts)),
                        atol=1e-12)

    def test_singular_inverse(self):
        xform = AffineTransform(np.array([[1.0, 2.0], [2.0, 4.0]]),
                                np.zeros(2))
        with pytest.raises(SingularTransform):
            xform.inverse()


class TestIo:
    def test_png_roundtrip(self, tmp_path, rng):
        img = np.floor(rng.uniform(0, 256, (12, 15, 3))).clip(0, 255)
        path = tmp_path / "img.png"
        save_image(img, path)
        assert_allclose(load_image(path), img)

    def test_grayscale_promoted(self, tmp_path):
        path = tmp_path / "gray.png"
        PILImage.fromarray(np.arange(100, dtype=np.uint8).reshape(10, 10),
                           mode="L").save(path)
        img = load_image(path)
        assert img.shape == (10, 10, 3)
        assert np.array_equal(img[:, :, 0], img[:, :, 1])
        assert np.array_equal(img[:, :, 0], img[:, :, 2])

    def test_jpeg_loads(self, tmp_path, rng):
        path = tmp_path / "img.jpg"
        save_image(np.full((16, 16, 3), 99.0), path)
        img = load_image(path)
        assert img.shape == (16, 16, 3)
