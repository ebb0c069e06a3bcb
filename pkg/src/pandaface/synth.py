"""Synthetic fixture dataset: procedural face-like textures per identity.

Each identity gets a prototype pattern (oriented gratings and elliptical
blob markings on an ellipse mask); each image is the prototype under a
small random affine perturbation, brightness jitter and pixel noise.
Everything is deterministic given the seed.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np

from .image import AffineTransform, save_image, warp_affine_bicubic
from .recognition import write_manifest

log = logging.getLogger("pandaface.synth")

IMAGE_SIZE = 100  # matches the 100-pixel face height of the real data

# Minimum mean absolute pixel difference between identity prototypes;
# colliding prototypes are regenerated with a new attempt index.
_MIN_PROTO_SEPARATION = 20.0


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(key))


def identity_prototype(seed: int, ident: int, attempt: int = 0) -> np.ndarray:
    """Deterministic (H, W, 3) prototype pattern for one identity."""
    rng = _rng(seed, 0, ident, attempt)
    size = IMAGE_SIZE
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)

    background = rng.uniform(30.0, 55.0)
    base = rng.uniform(175.0, 220.0)
    cx = size / 2 + rng.uniform(-3, 3)
    cy = size / 2 + rng.uniform(-1, 5)
    ax = rng.uniform(0.68, 0.8) * size / 2
    ay = rng.uniform(0.8, 0.92) * size / 2
    face = ((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2 <= 1.0

    pattern = np.full((size, size), background)
    texture = np.full((size, size), base)

    for _ in range(rng.integers(2, 4)):
        theta = rng.uniform(0.0, math.pi)
        wavelength = rng.uniform(6.0, 16.0)
        amplitude = rng.uniform(14.0, 28.0)
        phase = rng.uniform(0.0, 2 * math.pi)
        axis = xx * math.cos(theta) + yy * math.sin(theta)
        texture += amplitude * np.cos(2 * math.pi * axis / wavelength + phase)

    for _ in range(rng.integers(4, 8)):
        bx = cx + rng.uniform(-0.75, 0.75) * ax
        by = cy + rng.uniform(-0.75, 0.75) * ay
        bw = rng.uniform(5.0, 14.0)
        bh = rng.uniform(5.0, 14.0)
        rot = rng.uniform(0.0, math.pi)
        dark = rng.uniform(25.0, 80.0)
        xr = (xx - bx) * math.cos(rot) + (yy - by) * math.sin(rot)
        yr = -(xx - bx) * math.sin(rot) + (yy - by) * math.cos(rot)
        blob = (xr / bw) ** 2 + (yr / bh) ** 2 <= 1.0
        texture[blob] = dark

    pattern[face] = texture[face]
    gains = rng.uniform(0.85, 1.15, size=3)
    rgb = np.clip(pattern[:, :, None] * gains[None, None, :], 0.0, 255.0)
    return rgb


def _perturbed(prototype: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    size = prototype.shape[0]
    angle = math.radians(rng.uniform(-10.0, 10.0))
    scale = rng.uniform(0.9, 1.1)
    shift = rng.uniform(-5.0, 5.0, size=2)
    rot = scale * np.array([[math.cos(angle), -math.sin(angle)],
                            [math.sin(angle), math.cos(angle)]])
    centre = np.array([(size - 1) / 2.0, (size - 1) / 2.0])
    xform = AffineTransform(rot, centre - rot @ centre + shift)
    img = warp_affine_bicubic(prototype, xform, size, size)
    img = img + rng.uniform(-10.0, 10.0)
    img = img + rng.normal(0.0, 2.5, size=img.shape)
    return np.clip(img, 0.0, 255.0)


def build_prototypes(seed: int, ids: int) -> list[np.ndarray]:
    """Prototypes for all identities, regenerated until pairwise distinct."""
    prototypes: list[np.ndarray] = []
    for ident in range(ids):
        attempt = 0
        while True:
            candidate = identity_prototype(seed, ident, attempt)
            gaps = [float(np.abs(candidate - other).mean())
                    for other in prototypes]
            if all(gap > _MIN_PROTO_SEPARATION for gap in gaps):
                prototypes.append(candidate)
                break
            attempt += 1
            log.info("identity %d prototype too close, attempt %d",
                     ident, attempt)
            if attempt > 50:
                raise RuntimeError("could not separate identity prototypes")
    return prototypes


def generate_dataset(out_dir, seed: int, ids: int, per_id: int) -> Path:
    """Write images plus a ``manifest.csv``; returns the manifest path."""
    if ids < 1 or per_id < 1:
        raise ValueError("ids and per_id must be positive")
    out_dir = Path(out_dir)
    image_dir = out_dir / "images"
    image_dir.mkdir(parents=True, exist_ok=True)
    prototypes = build_prototypes(seed, ids)
    rows = []
    for ident in range(ids):
        panda_id = f"panda_{ident:02d}"
        for j in range(per_id):
            rng = _rng(seed, 1, ident, j)
            img = _perturbed(prototypes[ident], rng)
            rel = Path("images") / f"{panda_id}_{j:02d}.png"
            save_image(img, out_dir / rel)
            rows.append((rel.as_posix(), panda_id))
    manifest = out_dir / "manifest.csv"
    write_manifest(rows, manifest)
    return manifest
