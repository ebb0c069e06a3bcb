"""Enrolment, probe scoring, identification/verification and persistence.

Enrolment trains one one-against-all PLS classifier per gallery image:
all images (the target included) are aligned to the target's keypoints,
featurized, labelled +1 when they share the target's identity and -1
otherwise, then z-scored and regressed.  Scoring aligns a probe to every
entry's keypoints and evaluates that entry's classifier.
"""

from __future__ import annotations

import csv
import logging
import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import pls
from .alignment import KeyPointSet, cpd_affine, sobel_edges, subsample_keypoints
from .config import RunConfig
from .errors import (AlignmentFailure, ChecksumMismatch, DegenerateGeometry,
                     EmptyEdgeSet, FormatVersionMismatch, GalleryIoError,
                     InsufficientData, NoFiniteScores, NonFinite,
                     UnknownIdentity)
from .features import extract_features, feature_dimension
from .image import warp_affine_bicubic

log = logging.getLogger("pandaface.recognition")

GALLERY_MAGIC = b"PFGA"
GALLERY_VERSION = 1


@dataclass
class GalleryEntry:
    entry_id: int
    panda_id: str
    keypoints: KeyPointSet
    target_dims: tuple[int, int]  # (width, height)
    model: pls.PlsModel


@dataclass
class Gallery:
    entries: list[GalleryEntry]
    config: RunConfig

    @property
    def id_set(self) -> list[str]:
        return sorted({e.panda_id for e in self.entries})

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class ScoreVector:
    """Per-entry probe scores; failed alignments score -inf."""

    scores: np.ndarray
    panda_ids: list[str]
    failed_entries: list[int] = field(default_factory=list)


def image_keypoints(img: np.ndarray, config: RunConfig) -> KeyPointSet:
    """Capped Sobel keypoints of an RGB image; wraps edge failures."""
    from .image import to_grayscale

    try:
        kps = sobel_edges(to_grayscale(img), config.sobel_threshold)
    except EmptyEdgeSet as exc:
        raise AlignmentFailure(f"no keypoints: {exc}") from exc
    return subsample_keypoints(kps, config.cpd.max_points)


def aligned_features(img: np.ndarray, source_kps: KeyPointSet,
                     target_kps: KeyPointSet, target_dims: tuple[int, int],
                     config: RunConfig) -> np.ndarray:
    """Features of img registered onto the target frame."""
    try:
        xform, _ = cpd_affine(source_kps, target_kps, config.cpd)
    except (DegenerateGeometry, NonFinite) as exc:
        raise AlignmentFailure(f"registration failed: {exc}") from exc
    width, height = target_dims
    warped = warp_affine_bicubic(img, xform, width, height)
    return extract_features(warped, config.features).values


def enroll(images, config: RunConfig | None = None,
           feature_provider=None, threads: int | None = None) -> Gallery:
    """Train one classifier per image and assemble the gallery.

    ``images`` is a sequence of (rgb_array, panda_id).  An optional
    ``feature_provider(source_index, target_index)`` supplies the aligned
    feature rows (used by the evaluation harness to share its cache);
    indices refer to positions in ``images``.
    """
    config = config or RunConfig()
    images = list(images)
    if len(images) < 2:
        raise InsufficientData("need at least 2 images to enrol")
    ids = [panda_id for _, panda_id in images]
    if len(set(ids)) < 2:
        raise InsufficientData("need at least 2 distinct identities")
    if threads is None:
        threads = config.effective_threads()

    keypoints: dict[int, KeyPointSet] = {}
    failed_ids = set()
    for idx, (img, panda_id) in enumerate(images):
        try:
            keypoints[idx] = image_keypoints(img, config)
        except AlignmentFailure as exc:
            log.warning("skipping image %d (%s): %s", idx, panda_id, exc)
            failed_ids.add(panda_id)
    usable = sorted(keypoints)
    counts = {}
    for idx in usable:
        counts[ids[idx]] = counts.get(ids[idx], 0) + 1
    for panda_id in failed_ids:
        if counts.get(panda_id, 0) < 2:
            raise InsufficientData(
                f"identity {panda_id!r} has fewer than 2 usable images "
                "after keypoint failures")
    if len(usable) < 2 or len(set(ids[i] for i in usable)) < 2:
        raise InsufficientData("too few usable images after keypoint failures")

    if feature_provider is None:
        def feature_provider(src, tgt):
            img_src = images[src][0]
            tgt_kps = keypoints[tgt]
            h, w = images[tgt][0].shape[:2]
            return aligned_features(img_src, keypoints[src], tgt_kps,
                                    (w, h), config)

    def build_entry(tgt):
        img_t, id_t = images[tgt]
        rows = []
        labels = []
        for src in usable:
            try:
                rows.append(np.asarray(feature_provider(src, tgt),
                                       dtype=np.float64))
            except AlignmentFailure as exc:
                if src == tgt:
                    log.warning("target %d (%s) failed self-alignment: %s",
                                tgt, id_t, exc)
                    return None
                log.warning("dropping row %d -> target %d: %s", src, tgt, exc)
                continue
            labels.append(1.0 if ids[src] == id_t else -1.0)
        labels = np.asarray(labels)
        if len(rows) < 2 or not (labels > 0).any() or not (labels < 0).any():
            log.warning("target %d (%s): not enough usable rows, skipped",
                        tgt, id_t)
            return None
        model = pls.fit(np.vstack(rows), labels, config.pls_components)
        h, w = img_t.shape[:2]
        # entry_id is the target's position in the input image list
        return GalleryEntry(tgt, id_t, keypoints[tgt], (w, h), model)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            built = list(pool.map(build_entry, usable))
    else:
        built = [build_entry(tgt) for tgt in usable]

    entries = [entry for entry in built if entry is not None]
    if len(entries) < 2 or len({e.panda_id for e in entries}) < 2:
        raise InsufficientData("too few classifiers could be trained")
    return Gallery(entries, config)


def score_probe(probe: np.ndarray, gallery: Gallery,
                feature_provider=None, threads: int = 1) -> ScoreVector:
    """Probe scores against every gallery entry (Algorithm 4's diagonal).

    ``feature_provider(entry_index)`` may supply the probe's aligned
    features for an entry; entries whose alignment fails score -inf.
    """
    config = gallery.config
    n = len(gallery.entries)
    scores = np.full(n, -np.inf)
    failed = []

    probe_kps = None
    if feature_provider is None:
        try:
            probe_kps = image_keypoints(probe, config)
        except AlignmentFailure as exc:
            log.warning("probe keypoints failed: %s", exc)
            return ScoreVector(scores, [e.panda_id for e in gallery.entries],
                               list(range(n)))

        def feature_provider(entry_idx):
            entry = gallery.entries[entry_idx]
            return aligned_features(probe, probe_kps, entry.keypoints,
                                    entry.target_dims, config)

    def score_one(idx):
        entry = gallery.entries[idx]
        try:
            feats = np.asarray(feature_provider(idx), dtype=np.float64)
        except AlignmentFailure as exc:
            log.warning("probe -> entry %d (%s) failed: %s",
                        idx, entry.panda_id, exc)
            return idx, -np.inf, True
        return idx, pls.pls_predict(entry.model, feats), False

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(score_one, range(n)))
    else:
        results = [score_one(i) for i in range(n)]
    for idx, value, did_fail in results:
        scores[idx] = value
        if did_fail:
            failed.append(idx)
    return ScoreVector(scores, [e.panda_id for e in gallery.entries], failed)


def scores_by_identity(scores: ScoreVector) -> dict[str, float]:
    """Max score per identity; identities with no finite entry get -inf."""
    agg: dict[str, float] = {}
    for value, panda_id in zip(scores.scores, scores.panda_ids):
        value = float(value)
        if panda_id not in agg or value > agg[panda_id]:
            agg[panda_id] = value
    return agg


def identify(scores: ScoreVector) -> tuple[str, dict[str, float]]:
    """Predicted identity (max of per-identity maxima) plus the score table.

    Ties resolve to the lexicographically smallest identity.
    """
    agg = scores_by_identity(scores)
    finite = {k: v for k, v in agg.items() if np.isfinite(v)}
    if not finite:
        raise NoFiniteScores("no entry produced a finite score")
    best_score = max(finite.values())
    best_id = min(k for k, v in finite.items() if v == best_score)
    return best_id, agg


def verify(scores: ScoreVector, claimed_id: str,
           threshold: float) -> tuple[bool, float]:
    """Accept/reject a claimed identity at the given score threshold."""
    if claimed_id not in set(scores.panda_ids):
        raise UnknownIdentity(f"identity {claimed_id!r} not in gallery")
    best = scores_by_identity(scores)[claimed_id]
    return bool(best >= threshold), best


# --------------------------------------------------------------------------
# Dataset manifest

def read_manifest(path) -> list[tuple[Path, str]]:
    """CSV with header ``path,panda_id``; paths resolve against the manifest."""
    path = Path(path)
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["path", "panda_id"]:
            raise ValueError(f"{path}: expected header 'path,panda_id'")
        for line in reader:
            if not line or not line[0].strip():
                continue
            rel, panda_id = line[0].strip(), line[1].strip()
            rows.append(((path.parent / rel), panda_id))
    return rows


def write_manifest(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "panda_id"])
        for rel, panda_id in rows:
            writer.writerow([str(rel), panda_id])


# --------------------------------------------------------------------------
# Gallery persistence (binary .gal container)

def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def save_gallery(gallery: Gallery, path) -> None:
    """Versioned binary dump with a trailing CRC-32 over the payload."""
    dim = feature_dimension(gallery.config.features)
    parts = [GALLERY_MAGIC, struct.pack("<I", GALLERY_VERSION)]
    parts.append(_pack_str(config_mod.dumps(gallery.config)))
    parts.append(struct.pack("<II", dim, len(gallery.entries)))
    for entry in gallery.entries:
        parts.append(_pack_str(entry.panda_id))
        parts.append(struct.pack("<III", entry.entry_id,
                                 entry.target_dims[0], entry.target_dims[1]))
        pts = np.ascontiguousarray(entry.keypoints.points, dtype="<f8")
        parts.append(struct.pack("<III", len(entry.keypoints),
                                 entry.keypoints.source_dims[0],
                                 entry.keypoints.source_dims[1]))
        parts.append(pts.tobytes())
        scaler = entry.model.standardizer
        parts.append(np.ascontiguousarray(scaler.means, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(scaler.stds, dtype="<f8").tobytes())
        parts.append(struct.pack("<dd", scaler.y_mean, scaler.y_std))
        parts.append(struct.pack("<I", entry.model.n_components))
        parts.append(np.ascontiguousarray(entry.model.beta, dtype="<f8").tobytes())
    payload = b"".join(parts)
    blob = payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise GalleryIoError(f"cannot write {path}: {exc}") from exc


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.buf):
            raise ChecksumMismatch("gallery file is truncated")
        out = self.buf[self.pos:self.pos + count]
        self.pos += count
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self, count: int) -> np.ndarray:
        raw = self.take(8 * count)
        return np.frombuffer(raw, dtype="<f8", count=count).astype(np.float64)

    def text(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def load_gallery(path) -> Gallery:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise GalleryIoError(f"cannot read {path}: {exc}") from exc
    if len(blob) < len(GALLERY_MAGIC) + 8:
        raise ChecksumMismatch("gallery file is truncated")
    if blob[:len(GALLERY_MAGIC)] != GALLERY_MAGIC:
        raise FormatVersionMismatch("not a pandaface gallery file")
    payload, crc_raw = blob[:-4], blob[-4:]
    expected = struct.unpack("<I", crc_raw)[0]
    if zlib.crc32(payload) & 0xFFFFFFFF != expected:
        raise ChecksumMismatch("gallery CRC check failed")
    reader = _Reader(payload)
    reader.take(len(GALLERY_MAGIC))
    version = reader.u32()
    if version != GALLERY_VERSION:
        raise FormatVersionMismatch(f"unsupported gallery version {version}")
    config = config_mod.loads(reader.text())
    dim = reader.u32()
    n_entries = reader.u32()
    entries = []
    for _ in range(n_entries):
        panda_id = reader.text()
        entry_id, tw, th = struct.unpack("<III", reader.take(12))
        n_pts, sw, sh = struct.unpack("<III", reader.take(12))
        pts = reader.f64(n_pts * 2).reshape(n_pts, 2)
        means = reader.f64(dim)
        stds = reader.f64(dim)
        y_mean, y_std = struct.unpack("<dd", reader.take(16))
        n_components = reader.u32()
        beta = reader.f64(dim)
        scaler = pls.Standardizer(means, stds, y_mean, y_std)
        entries.append(GalleryEntry(
            entry_id, panda_id, KeyPointSet(pts, (sw, sh)), (tw, th),
            pls.PlsModel(beta, scaler, n_components)))
    if reader.pos != len(payload):
        raise ChecksumMismatch("trailing bytes after the last entry")
    return Gallery(entries, config)
