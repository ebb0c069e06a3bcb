"""Image representation, colour conversion, resizing and affine warping.

Images are numpy arrays: RGB images are (H, W, 3) float64 with values in
[0, 255]; grayscale images are (H, W) float64.  All operations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage

from . import kernels
from .errors import SingularTransform

LUMA_WEIGHTS = (0.299, 0.587, 0.114)  # Rec.601

_DET_EPS = 1e-12


@dataclass(frozen=True)
class AffineTransform:
    """2D affine map p -> linear @ p + translation."""

    linear: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        lin = np.asarray(self.linear, dtype=np.float64).reshape(2, 2)
        tr = np.asarray(self.translation, dtype=np.float64).reshape(2)
        if not (np.isfinite(lin).all() and np.isfinite(tr).all()):
            raise ValueError("affine transform entries must be finite")
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "translation", tr)

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(np.eye(2), np.zeros(2))

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.linear))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map an (N, 2) array of (x, y) points."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.linear.T + self.translation

    def inverse(self) -> "AffineTransform":
        if abs(self.det) <= _DET_EPS:
            raise SingularTransform(f"determinant {self.det:g} is not invertible")
        inv = np.linalg.inv(self.linear)
        return AffineTransform(inv, -inv @ self.translation)

    def then(self, other: "AffineTransform") -> "AffineTransform":
        """Transform equivalent to applying self first, then other."""
        return AffineTransform(other.linear @ self.linear,
                               other.linear @ self.translation + other.translation)


def _check_rgb(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) RGB image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("image must be at least 1x1")
    return img


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Rec.601 luma, kept as unrounded float64."""
    img = _check_rgb(img)
    r, g, b = LUMA_WEIGHTS
    return r * img[:, :, 0] + g * img[:, :, 1] + b * img[:, :, 2]


def resize_to_height(img: np.ndarray, target_h: int) -> np.ndarray:
    """Bicubic resize to the given height, preserving aspect ratio."""
    img = _check_rgb(img)
    if target_h < 1:
        raise ValueError("target height must be >= 1")
    h, w = img.shape[:2]
    target_w = max(1, int(np.floor(w * target_h / h + 0.5)))
    # Centre-aligned inverse mapping: out (x, y) samples src at
    # ((x + .5) * w / out_w - .5, (y + .5) * h / out_h - .5).
    sx = w / target_w
    sy = h / target_h
    out = np.empty((target_h, target_w, 3), dtype=np.float64)
    for ch in range(3):
        out[:, :, ch] = kernels.bicubic_warp(
            np.ascontiguousarray(img[:, :, ch]),
            sx, 0.0, 0.0, sy, 0.5 * sx - 0.5, 0.5 * sy - 0.5,
            target_h, target_w)
    np.clip(out, 0.0, 255.0, out=out)
    return out


def warp_affine_bicubic(src: np.ndarray, xform: AffineTransform,
                        canvas_w: int, canvas_h: int) -> np.ndarray:
    """Warp src onto a canvas so that output = src mapped through xform.

    Backward mapping: each output pixel is sampled from src at the
    inverse-transformed location with Catmull-Rom bicubic taps;
    out-of-range taps replicate the nearest border pixel.
    """
    src = _check_rgb(src)
    inv = xform.inverse()  # raises SingularTransform when not invertible
    (m00, m01), (m10, m11) = inv.linear
    t0, t1 = inv.translation
    out = np.empty((canvas_h, canvas_w, 3), dtype=np.float64)
    for ch in range(3):
        out[:, :, ch] = kernels.bicubic_warp(
            np.ascontiguousarray(src[:, :, ch]),
            m00, m01, m10, m11, t0, t1, canvas_h, canvas_w)
    np.clip(out, 0.0, 255.0, out=out)
    return out


def load_image(path) -> np.ndarray:
    """Read a PNG/JPEG file as (H, W, 3) float64 in [0, 255].

    Grayscale and palette inputs are promoted to three channels.
    """
    with PILImage.open(path) as im:
        rgb = im.convert("RGB")
        return np.asarray(rgb, dtype=np.float64)


def save_image(img: np.ndarray, path) -> None:
    img = _check_rgb(img)
    data = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    PILImage.fromarray(data, mode="RGB").save(path)
