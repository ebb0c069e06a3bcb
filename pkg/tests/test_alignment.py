import numpy as np
import pytest
from numpy.testing import assert_allclose

from pandaface.alignment import (CpdParams, KeyPointSet, align, cpd_affine,
                                 dump_diagnostics_csv, dump_keypoints_csv,
                                 sobel_edges, sobel_gradients,
                                 subsample_keypoints)
from pandaface.errors import (DegenerateGeometry, EmptyEdgeSet, ImageTooSmall)
from pandaface.image import AffineTransform, to_grayscale, warp_affine_bicubic

FAST_CPD = CpdParams(max_points=400, max_iterations=120)


def cloud(rng, n=200, lo=0.0, hi=100.0):
    return rng.uniform(lo, hi, (n, 2))


class TestSobel:
    def test_hand_convolution(self):
        img = np.array([[0.0, 0.0, 255.0]] * 3)
        gx, gy = sobel_gradients(img)
        assert gx.shape == (1, 1)
        assert abs(gx[0, 0]) == 1020.0
        assert gy[0, 0] == 0.0

    def test_constant_raises(self):
        with pytest.raises(EmptyEdgeSet):
            sobel_edges(np.full((10, 10), 40.0))

    def test_vertical_step(self):
        img = np.zeros((10, 10))
        img[:, 5:] = 255.0
        kps = sobel_edges(img, 0.25)
        xs = sorted(set(kps.points[:, 0]))
        assert xs == [4.0, 5.0]

    def test_interior_and_deterministic(self):
        rng = np.random.default_rng(5)
        img = rng.uniform(0, 255, (20, 24))
        a = sobel_edges(img, 0.3)
        b = sobel_edges(img, 0.3)
        assert np.array_equal(a.points, b.points)
        assert a.points[:, 0].min() >= 1 and a.points[:, 0].max() <= 22
        assert a.points[:, 1].min() >= 1 and a.points[:, 1].max() <= 18

    def test_too_small(self):
        with pytest.raises(ImageTooSmall):
            sobel_edges(np.zeros((2, 5)))


class TestSubsample:
    def test_under_cap_unchanged(self, rng):
        kps = KeyPointSet(cloud(rng, 50), (100, 100))
        out = subsample_keypoints(kps, 100)
        assert np.array_equal(out.points, kps.points)

    def test_subset_and_size(self, rng):
        kps = KeyPointSet(cloud(rng, 1000), (100, 100))
        out = subsample_keypoints(kps, 500)
        assert len(out) == 500
        have = {tuple(p) for p in kps.points}
        assert all(tuple(p) in have for p in out.points)

    def test_deterministic(self, rng):
        kps = KeyPointSet(cloud(rng, 777), (100, 100))
        a = subsample_keypoints(kps, 123)
        b = subsample_keypoints(kps, 123)
        assert np.array_equal(a.points, b.points)


class TestCpd:
    def test_identity_fixed_point(self, rng):
        pts = cloud(rng)
        kps = KeyPointSet(pts, (100, 100))
        xform, _ = cpd_affine(kps, kps, FAST_CPD)
        assert np.abs(xform.linear - np.eye(2)).max() < 1e-6
        assert np.abs(xform.translation).max() < 1e-6

    def test_exact_recovery(self, rng):
        pts = cloud(rng)
        a = np.array([[1.2, 0.1], [-0.05, 0.9]])
        t0 = np.array([5.0, -3.0])
        tgt = pts @ a.T + t0
        xform, diag = cpd_affine(KeyPointSet(pts, (100, 100)),
                                 KeyPointSet(tgt, (100, 100)), FAST_CPD)
        residual = np.abs(xform.apply(pts) - tgt).max()
        assert residual < 1e-3
        assert diag.iterations >= 1
        assert np.isfinite(diag.final_objective)

    def test_collinear_raises(self):
        line = np.column_stack([np.linspace(0, 50, 30), np.linspace(0, 25, 30)])
        tgt = KeyPointSet(np.random.default_rng(0).uniform(0, 50, (30, 2)),
                          (50, 50))
        with pytest.raises(DegenerateGeometry):
            cpd_affine(KeyPointSet(line, (50, 50)), tgt)

    def test_too_few_points(self, rng):
        with pytest.raises(DegenerateGeometry):
            cpd_affine(KeyPointSet(cloud(rng, 2), (9, 9)),
                       KeyPointSet(cloud(rng, 30), (9, 9)))

    def test_objective_non_increasing(self, rng):
        pts = cloud(rng)
        tgt = pts @ np.array([[1.1, 0.05], [0.03, 0.93]]).T
        tgt = tgt + rng.normal(0, 1.0, tgt.shape)
        _, diag = cpd_affine(KeyPointSet(pts, (100, 100)),
                             KeyPointSet(tgt, (100, 100)), FAST_CPD)
        objs = [row[1] for row in diag.history]
        assert len(objs) >= 2
        for prev, curr in zip(objs, objs[1:]):
            assert curr <= prev + 1e-9 * abs(prev)

    def test_common_shift_invariance(self, rng):
        pts = cloud(rng)
        tgt = pts @ np.array([[1.15, -0.08], [0.02, 0.9]]).T + [4.0, 2.0]
        shift = np.array([37.5, -12.25])
        x1, _ = cpd_affine(KeyPointSet(pts, (100, 100)),
                           KeyPointSet(tgt, (100, 100)), FAST_CPD)
        x2, _ = cpd_affine(KeyPointSet(pts + shift, (100, 100)),
                           KeyPointSet(tgt + shift, (100, 100)), FAST_CPD)
        assert np.abs(x2.linear - x1.linear).max() < 1e-6
        expected_t = x1.translation + shift - x1.linear @ shift
        assert np.abs(x2.translation - expected_t).max() < 1e-6

    @pytest.mark.parametrize("seed", range(5))
    def test_recovery_random_transforms(self, seed):
        rng = np.random.default_rng(seed)
        pts = cloud(rng, 150)
        while True:
            theta = rng.uniform(-np.pi / 4, np.pi / 4)
            rot = np.array([[np.cos(theta), -np.sin(theta)],
                            [np.sin(theta), np.cos(theta)]])
            a = rot @ (np.eye(2) + rng.uniform(-0.2, 0.2, (2, 2)))
            if 0.5 <= abs(np.linalg.det(a)) <= 2.0:
                break
        t0 = rng.uniform(-20, 20, 2)
        tgt = pts @ a.T + t0
        xform, _ = cpd_affine(KeyPointSet(pts, (100, 100)),
                              KeyPointSet(tgt, (100, 100)), FAST_CPD)
        assert np.abs(xform.apply(pts) - tgt).max() < 1e-3


class TestAlign:
    def test_self_alignment(self, textured_rgb):
        gray = to_grayscale(textured_rgb)
        kps = sobel_edges(gray, 0.25)
        kps = subsample_keypoints(kps, FAST_CPD.max_points)
        h, w = textured_rgb.shape[:2]
        out = align(textured_rgb, kps, (w, h), FAST_CPD)
        assert np.abs(out - textured_rgb).mean() < 2.0

    def test_known_affine_pair(self, textured_rgb):
        h, w = textured_rgb.shape[:2]
        xform = AffineTransform(np.array([[1.06, 0.05], [-0.04, 0.95]]),
                                np.array([3.0, -2.0]))
        moved = warp_affine_bicubic(textured_rgb, xform, w, h)
        kps = subsample_keypoints(sobel_edges(to_grayscale(textured_rgb), 0.25),
                                  FAST_CPD.max_points)
        back = align(moved, kps, (w, h), FAST_CPD)
        interior = (slice(10, h - 10), slice(10, w - 10))
        a = to_grayscale(back)[interior].ravel()
        b = to_grayscale(textured_rgb)[interior].ravel()
        r = np.corrcoef(a, b)[0, 1]
        assert r > 0.95

    def test_constant_source(self, textured_rgb):
        kps = sobel_edges(to_grayscale(textured_rgb), 0.25)
        with pytest.raises(EmptyEdgeSet):
            align(np.full((50, 50, 3), 128.0), kps, (100, 100), FAST_CPD)


class TestDebugDumps:
    def test_csv_files(self, tmp_path, rng):
        pts = cloud(rng, 40)
        kps = KeyPointSet(pts, (100, 100))
        _, diag = cpd_affine(kps, kps, CpdParams(max_points=100))
        kp_path = tmp_path / "kps.csv"
        di_path = tmp_path / "diag.csv"
        dump_keypoints_csv(kps, kp_path)
        dump_diagnostics_csv(diag, di_path)
        kp_lines = kp_path.read_text().splitlines()
        assert kp_lines[0] == "x,y"
        assert len(kp_lines) == 41
        di_lines = di_path.read_text().splitlines()
        assert di_lines[0] == "iter,objective,sigma2"
        assert len(di_lines) == diag.iterations + 1
