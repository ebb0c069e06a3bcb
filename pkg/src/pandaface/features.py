"""Texture features: LBP variants, Gabor orientation fields, block grids.

A feature vector is the concatenation of per-block LBP histograms (two
variants, three colour channels, seven grids) and per-block histograms of
the Gabor orientation index field computed on the grayscale image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from . import kernels
from .errors import GridTooFine, ImageTooSmall, OutOfBounds
from .image import to_grayscale

RIU2_P8_R1 = "riu2_p8_r1"
U2_P8_R2 = "u2_p8_r2"

GABOR_DESCRIPTOR = "gabor"

# Magnitudes below this are treated as exact zeros so that flat inputs
# resolve ties deterministically toward orientation index 0.
_MAG_FLOOR = 1e-9

_MIN_IMAGE_SIDE = 16


@dataclass(frozen=True)
class GridSpec:
    name: str
    cols: int
    rows: int
    lbp_variant: str

    def __post_init__(self):
        if self.cols < 1 or self.rows < 1:
            raise ValueError("grid must have at least one block per direction")
        if self.lbp_variant not in (RIU2_P8_R1, U2_P8_R2):
            raise ValueError(f"unknown LBP variant {self.lbp_variant!r}")

    @property
    def block_count(self) -> int:
        return self.cols * self.rows


@dataclass(frozen=True)
class GaborParams:
    wavelengths: tuple[float, ...] = (4.0, 8.0, 12.0, 16.0)
    num_orientations: int = 16
    sigma_ratio: float = 0.56
    aspect_ratio: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "wavelengths",
                           tuple(float(w) for w in self.wavelengths))
        if any(w <= 0 for w in self.wavelengths):
            raise ValueError("wavelengths must be positive")
        if any(b <= a for a, b in zip(self.wavelengths, self.wavelengths[1:])):
            raise ValueError("wavelengths must be strictly increasing")
        if self.num_orientations < 1:
            raise ValueError("need at least one orientation")
        if self.sigma_ratio <= 0 or self.aspect_ratio <= 0:
            raise ValueError("sigma_ratio and aspect_ratio must be positive")

    @property
    def num_scales(self) -> int:
        return len(self.wavelengths)


DEFAULT_GRIDS = (
    GridSpec("G1", 7, 5, RIU2_P8_R1),
    GridSpec("G2", 5, 7, RIU2_P8_R1),
    GridSpec("G3", 5, 5, U2_P8_R2),
    GridSpec("G4", 4, 3, U2_P8_R2),
    GridSpec("G5", 3, 4, U2_P8_R2),
    GridSpec("G6", 3, 3, U2_P8_R2),
    GridSpec("G7", 2, 2, U2_P8_R2),
)


@dataclass(frozen=True)
class FeatureConfig:
    grids: tuple[GridSpec, ...] = DEFAULT_GRIDS
    gabor: GaborParams = GaborParams()

    def __post_init__(self):
        if not self.grids:
            raise ValueError("at least one grid is required")


# --------------------------------------------------------------------------
# LBP codes and bin mappings

def _circle_offsets(radius: float, points: int = 8) -> np.ndarray:
    offs = np.empty((points, 2), dtype=np.float64)
    for p in range(points):
        ang = 2.0 * math.pi * p / points
        dx = radius * math.cos(ang)
        dy = radius * math.sin(ang)  # image rows grow downward
        if abs(dx - round(dx)) < 1e-9:
            dx = round(dx)
        if abs(dy - round(dy)) < 1e-9:
            dy = round(dy)
        offs[p] = (dx, dy)
    return offs


def _transitions(code: int, points: int = 8) -> int:
    rotated = ((code << 1) | (code >> (points - 1))) & ((1 << points) - 1)
    return bin(code ^ rotated).count("1")


def lbp_bin_riu2(code: int, points: int = 8) -> int:
    """Rotation-invariant uniform bin: popcount for uniform codes, else 9."""
    if not 0 <= code < (1 << points):
        raise ValueError(f"code {code} out of range")
    if _transitions(code, points) <= 2:
        return bin(code).count("1")
    return points + 1


@lru_cache(maxsize=None)
def _u2_uniform_codes(points: int = 8) -> tuple[int, ...]:
    return tuple(c for c in range(1 << points) if _transitions(c, points) <= 2)


def lbp_bin_u2(code: int, points: int = 8) -> int:
    """Uniform bin: rank of the code among uniform codes, else the catch-all."""
    if not 0 <= code < (1 << points):
        raise ValueError(f"code {code} out of range")
    uniform = _u2_uniform_codes(points)
    if _transitions(code, points) <= 2:
        return uniform.index(code)
    return len(uniform)


@dataclass(frozen=True)
class _LbpVariant:
    radius: float
    margin: int
    num_bins: int
    lut: np.ndarray
    offsets: np.ndarray


@lru_cache(maxsize=None)
def _variant_table(name: str) -> _LbpVariant:
    if name == RIU2_P8_R1:
        radius, bins = 1.0, 10
        lut = np.array([lbp_bin_riu2(c) for c in range(256)], dtype=np.int64)
    elif name == U2_P8_R2:
        radius, bins = 2.0, 59
        lut = np.array([lbp_bin_u2(c) for c in range(256)], dtype=np.int64)
    else:
        raise ValueError(f"unknown LBP variant {name!r}")
    return _LbpVariant(radius, int(math.ceil(radius)), bins, lut,
                       _circle_offsets(radius))


def lbp_code(img: np.ndarray, x: int, y: int, points: int = 8,
             radius: float = 1.0) -> int:
    """LBP code at one pixel; reference for the compiled map kernel."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    margin = int(math.ceil(radius))
    if not (margin <= x < w - margin and margin <= y < h - margin):
        raise OutOfBounds(f"circle of radius {radius} at ({x}, {y}) exits the image")
    offs = _circle_offsets(radius, points)
    centre = img[y, x]
    code = 0
    for p in range(points):
        sx = x + offs[p, 0]
        sy = y + offs[p, 1]
        x0 = int(math.floor(sx))
        y0 = int(math.floor(sy))
        fx = sx - x0
        fy = sy - y0
        if fx == 0.0 and fy == 0.0:
            val = img[y0, x0]
        else:
            x1 = min(x0 + 1, w - 1)
            y1 = min(y0 + 1, h - 1)
            v0 = img[y0, x0] + fx * (img[y0, x1] - img[y0, x0])
            v1 = img[y1, x0] + fx * (img[y1, x1] - img[y1, x0])
            val = v0 + fy * (v1 - v0)
        if val >= centre:
            code |= 1 << p
    return code


def lbp_map(channel: np.ndarray, variant: str) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel LBP bin map and validity mask for one channel.

    The ceil(R)-pixel border is invalid and excluded from histograms.
    """
    channel = np.ascontiguousarray(channel, dtype=np.float64)
    if channel.ndim != 2:
        raise ValueError("lbp_map expects a single channel")
    table = _variant_table(variant)
    h, w = channel.shape
    if h < 2 * table.margin + 1 or w < 2 * table.margin + 1:
        raise ImageTooSmall(
            f"{w}x{h} image too small for LBP radius {table.radius}")
    codes = kernels.lbp_codes(channel, table.offsets, table.margin)
    bins = table.lut[codes]
    valid = np.zeros((h, w), dtype=bool)
    valid[table.margin:h - table.margin, table.margin:w - table.margin] = True
    return bins, valid


def lbp_num_bins(variant: str) -> int:
    return _variant_table(variant).num_bins


# --------------------------------------------------------------------------
# Gabor bank and orientation field

class GaborBank:
    """Quadrature Gabor kernels, four scales by default, DC-corrected.

    Kernel spectra are cached per FFT shape so repeated fields over
    same-sized images pay the forward transforms once.  The cache is safe
    to share across threads (redundant recomputation is benign).
    """

    def __init__(self, params: GaborParams):
        self.params = params
        self.kernels = []  # [scale][orientation] -> (re, im)
        self.half_sizes = []
        step = 2.0 * math.pi / params.num_orientations
        for lam in params.wavelengths:
            sigma = params.sigma_ratio * lam
            half = int(math.ceil(3.0 * sigma))
            coords = np.arange(-half, half + 1, dtype=np.float64)
            xx, yy = np.meshgrid(coords, coords)
            per_scale = []
            for r in range(params.num_orientations):
                theta = r * step
                xr = xx * math.cos(theta) + yy * math.sin(theta)
                yr = -xx * math.sin(theta) + yy * math.cos(theta)
                env = np.exp(-(xr ** 2 + (params.aspect_ratio ** 2) * yr ** 2)
                             / (2.0 * sigma ** 2))
                re = env * np.cos(2.0 * math.pi * xr / lam)
                im = env * np.sin(2.0 * math.pi * xr / lam)
                re -= re.mean()
                im -= im.mean()
                per_scale.append((re, im))
            self.kernels.append(per_scale)
            self.half_sizes.append(half)
        self._spectra = {}

    @property
    def size(self) -> int:
        return self.params.num_scales * self.params.num_orientations

    def _spectrum(self, scale: int, orientation: int, fshape) -> tuple:
        key = (scale, orientation, fshape)
        found = self._spectra.get(key)
        if found is None:
            re, im = self.kernels[scale][orientation]
            found = (sfft.rfft2(re, fshape), sfft.rfft2(im, fshape))
            self._spectra[key] = found
        return found

    def response_magnitude(self, img: np.ndarray, scale: int,
                           orientation: int) -> np.ndarray:
        """|complex response| of one filter, replicate padding, same size."""
        img = np.asarray(img, dtype=np.float64)
        h, w = img.shape
        half = self.half_sizes[scale]
        padded = np.pad(img, half, mode="edge")
        fshape = (sfft.next_fast_len(padded.shape[0] + 2 * half),
                  sfft.next_fast_len(padded.shape[1] + 2 * half))
        spec = sfft.rfft2(padded, fshape)
        fre, fim = self._spectrum(scale, orientation, fshape)
        k0 = 2 * half
        cre = sfft.irfft2(spec * fre, fshape)[k0:k0 + h, k0:k0 + w]
        cim = sfft.irfft2(spec * fim, fshape)[k0:k0 + h, k0:k0 + w]
        return np.hypot(cre, cim)


def build_gabor_bank(params: GaborParams) -> GaborBank:
    return GaborBank(params)


@lru_cache(maxsize=4)
def _shared_bank(params: GaborParams) -> GaborBank:
    return GaborBank(params)


def gabor_orientation_field(img: np.ndarray, bank: GaborBank) -> np.ndarray:
    """Index of the orientation with maximal response magnitude per pixel.

    Ties resolve to the smallest orientation index, then the smallest
    scale; magnitudes under the noise floor count as exact zeros.
    Quadrature filters at theta and theta + pi carry identical magnitudes,
    so with an even orientation count the tie rule always lands on the
    lower half; only those responses are evaluated.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("gabor_orientation_field expects a grayscale image")
    h, w = img.shape
    if h < 3 or w < 3:
        raise ImageTooSmall("image too small for a Gabor field")
    n_orient = bank.params.num_orientations
    n_eff = n_orient // 2 if n_orient % 2 == 0 else n_orient
    n_scales = bank.params.num_scales
    mags = np.empty((n_eff * n_scales, h, w), dtype=np.float64)
    for scale in range(n_scales):
        half = bank.half_sizes[scale]
        padded = np.pad(img, half, mode="edge")
        fshape = (sfft.next_fast_len(padded.shape[0] + 2 * half),
                  sfft.next_fast_len(padded.shape[1] + 2 * half))
        spec = sfft.rfft2(padded, fshape)
        k0 = 2 * half
        for r in range(n_eff):
            fre, fim = bank._spectrum(scale, r, fshape)
            cre = sfft.irfft2(spec * fre, fshape)[k0:k0 + h, k0:k0 + w]
            cim = sfft.irfft2(spec * fim, fshape)[k0:k0 + h, k0:k0 + w]
            # r-major slot order makes argmax ties pick smallest r, then m.
            mags[r * n_scales + scale] = np.hypot(cre, cim)
    mags[mags < _MAG_FLOOR] = 0.0
    flat = np.argmax(mags, axis=0)
    return (flat // n_scales).astype(np.int64)


# --------------------------------------------------------------------------
# Block grids and histograms

def block_partition(width: int, height: int, cols: int, rows: int) -> list:
    """Row-major (x0, x1, y0, y1) blocks exactly tiling width x height."""
    if cols > width or rows > height:
        raise GridTooFine(f"{cols}x{rows} grid too fine for {width}x{height}")
    if cols < 1 or rows < 1:
        raise ValueError("grid must have at least one block per direction")
    xb = [(i * width) // cols for i in range(cols + 1)]
    yb = [(j * height) // rows for j in range(rows + 1)]
    return [(xb[i], xb[i + 1], yb[j], yb[j + 1])
            for j in range(rows) for i in range(cols)]


def block_histogram(bin_map: np.ndarray, block: tuple, num_bins: int,
                    valid: np.ndarray | None = None) -> np.ndarray:
    """L1-normalized histogram of valid pixels inside one block."""
    x0, x1, y0, y1 = block
    patch = bin_map[y0:y1, x0:x1]
    if valid is not None:
        patch = patch[valid[y0:y1, x0:x1]]
    counts = np.bincount(patch.ravel(), minlength=num_bins).astype(np.float64)
    total = counts.sum()
    if total > 0:
        counts /= total
    return counts


def _grid_histograms(bin_map: np.ndarray, valid: np.ndarray | None,
                     grid: GridSpec, num_bins: int) -> np.ndarray:
    """(block_count, num_bins) normalized histograms for a whole grid."""
    h, w = bin_map.shape
    blocks = block_partition(w, h, grid.cols, grid.rows)
    xb = np.array([b[0] for b in blocks[:grid.cols]] + [w])
    yb = np.array([blocks[i * grid.cols][2] for i in range(grid.rows)] + [h])
    col_of = np.searchsorted(xb, np.arange(w), side="right") - 1
    row_of = np.searchsorted(yb, np.arange(h), side="right") - 1
    block_id = row_of[:, None] * grid.cols + col_of[None, :]
    flat = block_id * num_bins + bin_map
    if valid is not None:
        flat = flat[valid]
    counts = np.bincount(flat.ravel(),
                         minlength=grid.block_count * num_bins)
    hists = counts.reshape(grid.block_count, num_bins).astype(np.float64)
    totals = hists.sum(axis=1, keepdims=True)
    np.divide(hists, totals, out=hists, where=totals > 0)
    return hists


# --------------------------------------------------------------------------
# Full feature vector

@dataclass(frozen=True)
class LayoutSegment:
    grid: str
    block: int
    descriptor: str  # lbp variant name or "gabor"
    channel: int | None  # 0/1/2 for R/G/B, None for gabor
    offset: int
    num_bins: int


@dataclass(frozen=True)
class FeatureLayout:
    segments: tuple[LayoutSegment, ...]
    dimension: int

    def describe(self, index: int) -> tuple:
        """(grid, block, descriptor, channel, bin) owning one coordinate."""
        if not 0 <= index < self.dimension:
            raise IndexError(index)
        for seg in self.segments:
            if seg.offset <= index < seg.offset + seg.num_bins:
                return (seg.grid, seg.block, seg.descriptor, seg.channel,
                        index - seg.offset)
        raise IndexError(index)  # unreachable on a well-formed layout


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    layout: FeatureLayout


def feature_dimension(config: FeatureConfig) -> int:
    """Closed-form length of the concatenated feature vector."""
    lbp = sum(g.block_count * 3 * lbp_num_bins(g.lbp_variant)
              for g in config.grids)
    gabor = sum(g.block_count for g in config.grids) * config.gabor.num_orientations
    return lbp + gabor


def feature_layout(config: FeatureConfig) -> FeatureLayout:
    segments = []
    offset = 0
    for grid in config.grids:
        bins = lbp_num_bins(grid.lbp_variant)
        for block in range(grid.block_count):
            for channel in range(3):
                segments.append(LayoutSegment(grid.name, block,
                                              grid.lbp_variant, channel,
                                              offset, bins))
                offset += bins
    n_orient = config.gabor.num_orientations
    for grid in config.grids:
        for block in range(grid.block_count):
            segments.append(LayoutSegment(grid.name, block, GABOR_DESCRIPTOR,
                                          None, offset, n_orient))
            offset += n_orient
    return FeatureLayout(tuple(segments), offset)


def extract_features(img: np.ndarray, config: FeatureConfig) -> FeatureVector:
    """Concatenated LBP and Gabor block histograms of one RGB image.

    LBP histograms run over grids, blocks (row-major), channels (R, G, B);
    Gabor orientation histograms follow over the same grids and blocks.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("extract_features expects an (H, W, 3) image")
    h, w = img.shape[:2]
    if h < _MIN_IMAGE_SIDE or w < _MIN_IMAGE_SIDE:
        raise ImageTooSmall(f"need at least {_MIN_IMAGE_SIDE} pixels per side")

    layout = feature_layout(config)
    values = np.zeros(layout.dimension, dtype=np.float64)

    variants = {g.lbp_variant for g in config.grids}
    maps = {}
    for variant in variants:
        per_channel = [lbp_map(img[:, :, ch], variant) for ch in range(3)]
        maps[variant] = per_channel

    offset = 0
    for grid in config.grids:
        bins = lbp_num_bins(grid.lbp_variant)
        per_channel = maps[grid.lbp_variant]
        hists = np.stack([
            _grid_histograms(bin_map, valid, grid, bins)
            for bin_map, valid in per_channel
        ])  # (3, blocks, bins)
        span = grid.block_count * 3 * bins
        values[offset:offset + span] = hists.transpose(1, 0, 2).ravel()
        offset += span

    field = gabor_orientation_field(to_grayscale(img), _shared_bank(config.gabor))
    n_orient = config.gabor.num_orientations
    for grid in config.grids:
        hists = _grid_histograms(field, None, grid, n_orient)
        span = grid.block_count * n_orient
        values[offset:offset + span] = hists.ravel()
        offset += span

    return FeatureVector(values, layout)
