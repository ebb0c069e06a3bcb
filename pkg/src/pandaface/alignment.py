"""Edge keypoints, affine coherent-point-drift registration and alignment.

Registration models the moving (source) keypoints as Gaussian mixture
centroids fitted to the target keypoints by EM; the M-step solves the
closed-form affine update.  The recovered transform maps source pixel
coordinates into the target frame and drives the bicubic warp.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DegenerateGeometry, EmptyEdgeSet, ImageTooSmall, NonFinite
from .image import AffineTransform, to_grayscale, warp_affine_bicubic

DEFAULT_SOBEL_THRESHOLD = 0.25

_SIGMA2_FLOOR = 1e-10


@dataclass(frozen=True)
class KeyPointSet:
    """2D edge-pixel coordinates (x, y) plus the source image size."""

    points: np.ndarray
    source_dims: tuple[int, int]  # (width, height)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class CpdParams:
    outlier_weight: float = 0.1
    max_iterations: int = 150
    tolerance: float = 1e-8
    # Keypoint cap per set; the E-step is O(max_points^2) per iteration.
    max_points: int = 400

    def __post_init__(self):
        if not 0.0 <= self.outlier_weight < 1.0:
            raise ValueError("outlier_weight must lie in [0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tolerance <= 0.0:
            raise ValueError("tolerance must be positive")
        if self.max_points < 10:
            raise ValueError("max_points must be >= 10")


@dataclass
class CpdDiagnostics:
    iterations: int = 0
    final_sigma2: float = math.nan
    final_objective: float = math.nan
    converged: bool = False
    init_label: str = "identity"
    # one (iteration, objective, sigma2) row per EM iteration
    history: list = field(default_factory=list)


def sobel_edges(img: np.ndarray, threshold_frac: float = DEFAULT_SOBEL_THRESHOLD) -> KeyPointSet:
    """Keypoints at interior pixels whose Sobel magnitude clears the threshold.

    The threshold is a fraction of the maximum gradient magnitude; the
    one-pixel border is excluded.  Raises EmptyEdgeSet when nothing passes
    (constant image).
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("sobel_edges expects a grayscale image")
    if not 0.0 < threshold_frac <= 1.0:
        raise ValueError("threshold_frac must lie in (0, 1]")
    h, w = img.shape
    if h < 3 or w < 3:
        raise ImageTooSmall(f"need at least 3x3 pixels, got {w}x{h}")
    gx, gy = sobel_gradients(img)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 0.0:
        raise EmptyEdgeSet("no gradient anywhere: constant image")
    ys, xs = np.nonzero(mag >= threshold_frac * peak)
    if xs.size == 0:
        raise EmptyEdgeSet("no pixel passed the edge threshold")
    pts = np.column_stack((xs + 1.0, ys + 1.0))  # interior offset
    return KeyPointSet(pts, (w, h))


def sobel_gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel responses on the interior grid ((h-2) x (w-2))."""
    img = np.asarray(img, dtype=np.float64)
    top, mid, bot = img[:-2], img[1:-1], img[2:]
    gx = (top[:, 2:] - top[:, :-2]) + 2.0 * (mid[:, 2:] - mid[:, :-2]) \
        + (bot[:, 2:] - bot[:, :-2])
    gy = (bot[:, :-2] - top[:, :-2]) + 2.0 * (bot[:, 1:-1] - top[:, 1:-1]) \
        + (bot[:, 2:] - top[:, 2:])
    return gx, gy


def subsample_keypoints(kps: KeyPointSet, max_points: int, seed: int = 0) -> KeyPointSet:
    """Deterministic uniformly spaced subsample capped at max_points.

    Points are ordered by (y, x) and picked at evenly spaced indices.
    ``seed`` is reserved for a future randomized mode and is unused.
    """
    if max_points < 10:
        raise ValueError("max_points must be >= 10")
    n = len(kps)
    if n <= max_points:
        return kps
    pts = kps.points
    order = np.lexsort((pts[:, 0], pts[:, 1]))
    idx = np.floor(np.arange(max_points) * (n / max_points)).astype(np.int64)
    return KeyPointSet(pts[order[idx]], kps.source_dims)


def _normalize(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    mean = points.mean(axis=0)
    centred = points - mean
    scale = math.sqrt(float((centred ** 2).sum()) / points.shape[0])
    if scale <= 0.0:
        raise DegenerateGeometry("all points coincide")
    return centred / scale, mean, scale


# EM from an identity start misses the basin of large rotations, so a
# whitened rotation grid is scored by likelihood first and the best
# candidate seeds the loop.  Scan kernel width in normalized units:
_SCAN_SIGMA2 = 0.05
_SCAN_ANGLES_DEG = range(-90, 91, 15)


def _sqrt_and_inv_sqrt(cov: np.ndarray):
    w, v = np.linalg.eigh(cov)
    if w[0] <= 1e-12 * max(w[1], 1e-30):
        return None, None
    root = v @ np.diag(np.sqrt(w)) @ v.T
    inv_root = v @ np.diag(1.0 / np.sqrt(w)) @ v.T
    return root, inv_root


def _init_candidates(x_norm: np.ndarray, y_norm: np.ndarray) -> list:
    """(label, B0) starts: identity plus whitened rotations.

    Both clouds are zero-mean unit-RMS; whitening reduces the unknown
    affine map to a rotation, which a coarse angle grid covers.
    """
    candidates = [("identity", np.eye(2))]
    sx, _ = _sqrt_and_inv_sqrt(x_norm.T @ x_norm / x_norm.shape[0])
    _, sy_inv = _sqrt_and_inv_sqrt(y_norm.T @ y_norm / y_norm.shape[0])
    if sx is None or sy_inv is None:
        return candidates
    for deg in _SCAN_ANGLES_DEG:
        theta = math.radians(deg)
        rot = np.array([[math.cos(theta), -math.sin(theta)],
                        [math.sin(theta), math.cos(theta)]])
        candidates.append((f"whitened_rot_{deg:+d}", sx @ rot @ sy_inv))
    return candidates


def cpd_affine(source: KeyPointSet, target: KeyPointSet,
               params: CpdParams | None = None) -> tuple[AffineTransform, CpdDiagnostics]:
    """Estimate the affine transform mapping source points onto target points.

    EM on a GMM whose centroids are the transformed source points, with a
    uniform outlier component of weight ``params.outlier_weight``.  Both
    sets are centred and scaled to unit RMS for conditioning; the returned
    transform is expressed in the original pixel coordinates.
    """
    params = params or CpdParams()
    y_raw = np.asarray(source.points, dtype=np.float64)
    x_raw = np.asarray(target.points, dtype=np.float64)
    m, n = y_raw.shape[0], x_raw.shape[0]
    if m < 3 or n < 3:
        raise DegenerateGeometry(f"need >= 3 points per set, got {m} and {n}")

    y_norm, y_mean, y_scale = _normalize(y_raw)
    x_norm, x_mean, x_scale = _normalize(x_raw)
    sv = np.linalg.svd(y_norm, compute_uv=False)
    if sv[1] <= 1e-9 * sv[0]:
        raise DegenerateGeometry("source points are (nearly) collinear")

    w = params.outlier_weight
    d = 2
    pbuf = np.empty((m, n), dtype=np.float64)
    nll_const = n * math.log(m / (1.0 - w))

    candidates = _init_candidates(x_norm, y_norm)
    if len(candidates) > 1:
        c_scan = ((2.0 * math.pi * _SCAN_SIGMA2) ** (d / 2.0)
                  * (w / (1.0 - w)) * (m / n))
        scores = []
        for _, b0 in candidates:
            _, _, _, logsum = kernels.cpd_estep(x_norm, y_norm @ b0.T,
                                                _SCAN_SIGMA2, c_scan, pbuf)
            scores.append(-logsum)
        best = int(np.argmin(scores))
    else:
        best = 0
    init_label, b = candidates[best]
    b = b.copy()
    t = np.zeros(d)
    # Cross-pair mean squared distance over 2D; unit-RMS sets give (1+1)/d.
    sigma2 = (float((x_norm ** 2).sum()) / n + float((y_norm ** 2).sum()) / m) / d
    diag = CpdDiagnostics(init_label=init_label)
    prev_nll = None

    for it in range(1, params.max_iterations + 1):
        ty = y_norm @ b.T + t
        c = (2.0 * math.pi * sigma2) ** (d / 2.0) * (w / (1.0 - w)) * (m / n)
        pt1, p1, px, logsum = kernels.cpd_estep(x_norm, ty, sigma2, c, pbuf)
        nll = -logsum + n * (d / 2.0) * math.log(2.0 * math.pi * sigma2) + nll_const
        if not math.isfinite(nll):
            raise NonFinite(f"objective became non-finite at iteration {it}")
        diag.history.append((it, nll, sigma2))
        diag.iterations = it
        diag.final_objective = nll
        diag.final_sigma2 = sigma2
        if prev_nll is not None and abs(prev_nll - nll) < params.tolerance * abs(prev_nll):
            diag.converged = True
            break
        prev_nll = nll

        n_p = float(p1.sum())
        if n_p <= 0.0:
            raise NonFinite("all correspondence mass fell into the outlier bin")
        mu_x = pt1 @ x_norm / n_p
        mu_y = p1 @ y_norm / n_p
        y_hat = y_norm - mu_y
        u = (px - np.outer(p1, mu_x)).T @ y_hat
        v = y_hat.T @ (p1[:, None] * y_hat)
        try:
            b = np.linalg.solve(v, u.T).T
        except np.linalg.LinAlgError as exc:
            raise DegenerateGeometry("affine normal matrix is singular") from exc
        t = mu_x - b @ mu_y
        x_hat_sq = float(pt1 @ ((x_norm - mu_x) ** 2).sum(axis=1))
        sigma2 = (x_hat_sq - float((u * b).sum())) / (n_p * d)
        if sigma2 < _SIGMA2_FLOOR:
            # Essentially exact match; lower sigma2 only chases round-off.
            diag.converged = True
            diag.final_sigma2 = sigma2
            break

    # De-normalize: x ≈ (sx/sy)·B'·y + (μx + sx·t' − B·μy).
    b_full = (x_scale / y_scale) * b
    t_full = x_mean + x_scale * t - b_full @ y_mean
    return AffineTransform(b_full, t_full), diag


def align(i_s: np.ndarray, k_t: KeyPointSet, target_dims: tuple[int, int],
          params: CpdParams | None = None,
          threshold_frac: float = DEFAULT_SOBEL_THRESHOLD) -> np.ndarray:
    """Register image i_s onto the target frame given the target keypoints.

    Extracts Sobel keypoints from i_s, estimates the affine transform to
    k_t with cpd_affine and warps i_s onto a target_dims (width, height)
    canvas.
    """
    params = params or CpdParams()
    k_s = sobel_edges(to_grayscale(i_s), threshold_frac)
    k_s = subsample_keypoints(k_s, params.max_points)
    k_t = subsample_keypoints(k_t, params.max_points)
    xform, _ = cpd_affine(k_s, k_t, params)
    width, height = target_dims
    return warp_affine_bicubic(i_s, xform, width, height)


def dump_keypoints_csv(kps: KeyPointSet, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y"])
        for x, y in kps.points:
            writer.writerow([repr(float(x)), repr(float(y))])


def dump_diagnostics_csv(diag: CpdDiagnostics, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iter", "objective", "sigma2"])
        for it, objective, sigma2 in diag.history:
            writer.writerow([it, repr(objective), repr(sigma2)])
