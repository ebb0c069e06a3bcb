"""Leave-one-out closed-set evaluation: ROC, TAR@FAR and rank-k accuracy.

Each image becomes the probe of one fold while the remaining images are
re-enrolled from scratch (their negative sets must not see the probe).
The affine registration between a fixed image pair does not depend on the
fold, so aligned feature rows are memoized across folds.
"""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import recognition
from .config import RunConfig
from .errors import AlignmentFailure, ClosedSetViolation, EmptyScores
from .recognition import scores_by_identity

log = logging.getLogger("pandaface.evaluation")


@dataclass
class ProbeOutcome:
    name: str
    true_id: str
    per_id_scores: dict[str, float]
    predicted: str | None


@dataclass
class EvaluationResult:
    probes: list[ProbeOutcome]
    genuine: list[float]
    impostor: list[float]
    roc: list[tuple[float, float]]
    tar_at_far: dict[float, float]
    rank_accuracies: list[float]
    id_set: list[str]
    config_hash: str
    counts: dict[str, int] = field(default_factory=dict)


class PairFeatureCache:
    """Aligned feature rows keyed by (source image, target image).

    Rows are stored as float32 to keep the N^2 cache affordable; fits and
    predictions upcast to float64.  Failures are cached too so a bad pair
    is attempted once.
    """

    def __init__(self, images, config: RunConfig):
        self.images = images
        self.config = config
        self._kps = {}
        self._rows = {}
        self._lock = threading.Lock()

    def keypoints(self, idx: int):
        with self._lock:
            cached = self._kps.get(idx)
        if cached is None:
            try:
                cached = recognition.image_keypoints(self.images[idx],
                                                     self.config)
            except AlignmentFailure as exc:
                cached = exc
            with self._lock:
                self._kps[idx] = cached
        if isinstance(cached, AlignmentFailure):
            raise cached
        return cached

    def get(self, src: int, tgt: int) -> np.ndarray:
        key = (src, tgt)
        with self._lock:
            cached = self._rows.get(key)
        if cached is None:
            cached = self._compute(src, tgt)
            with self._lock:
                self._rows[key] = cached
        if isinstance(cached, AlignmentFailure):
            raise cached
        return np.asarray(cached, dtype=np.float64)

    def _compute(self, src: int, tgt: int):
        try:
            src_kps = self.keypoints(src)
            tgt_kps = self.keypoints(tgt)
            h, w = self.images[tgt].shape[:2]
            row = recognition.aligned_features(self.images[src], src_kps,
                                               tgt_kps, (w, h), self.config)
            return row.astype(np.float32)
        except AlignmentFailure as exc:
            return exc

    def precompute(self, threads: int = 1) -> None:
        n = len(self.images)
        pairs = [(s, t) for t in range(n) for s in range(n)]

        def work(pair):
            try:
                self.get(*pair)
            except AlignmentFailure:
                pass

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(work, pairs))
        else:
            for pair in pairs:
                work(pair)


def leave_one_out(samples, config: RunConfig | None = None, *,
                  fars=(0.01,), max_rank: int = 5,
                  cache_alignments: bool = True,
                  threads: int | None = None) -> EvaluationResult:
    """Run the closed-set leave-one-out protocol over (name, image, id) rows.

    Every identity needs at least two images so each probe keeps a mate in
    its fold's gallery.  Returns the aggregate verification and
    identification metrics.
    """
    config = config or RunConfig()
    samples = list(samples)
    names = [s[0] for s in samples]
    images = [s[1] for s in samples]
    ids = [s[2] for s in samples]
    counts: dict[str, int] = {}
    for panda_id in ids:
        counts[panda_id] = counts.get(panda_id, 0) + 1
    single = sorted(k for k, v in counts.items() if v < 2)
    if single:
        raise ClosedSetViolation(
            f"identities with a single image: {', '.join(single)}")
    if threads is None:
        threads = config.effective_threads()

    cache = PairFeatureCache(images, config) if cache_alignments else None
    if cache is not None:
        cache.precompute(threads)

    def run_fold(probe_idx: int) -> ProbeOutcome:
        members = [i for i in range(len(samples)) if i != probe_idx]
        fold_images = [(images[i], ids[i]) for i in members]
        if cache is not None:
            provider = lambda s, t: cache.get(members[s], members[t])
        else:
            provider = None
        gallery = recognition.enroll(fold_images, config,
                                     feature_provider=provider, threads=1)
        if cache is not None:
            # entry_id is the target's position in the fold's image list
            entry_to_global = {idx: members[entry.entry_id]
                               for idx, entry in enumerate(gallery.entries)}
            probe_provider = lambda e: cache.get(probe_idx, entry_to_global[e])
        else:
            probe_provider = None
        scores = recognition.score_probe(images[probe_idx], gallery,
                                         feature_provider=probe_provider,
                                         threads=1)
        agg = scores_by_identity(scores)
        finite = {k: v for k, v in agg.items() if np.isfinite(v)}
        predicted = None
        if finite:
            best = max(finite.values())
            predicted = min(k for k, v in finite.items() if v == best)
        return ProbeOutcome(names[probe_idx], ids[probe_idx], agg, predicted)

    order = range(len(samples))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run_fold, order))
    else:
        outcomes = [run_fold(i) for i in order]

    genuine = []
    impostor = []
    for outcome in outcomes:
        genuine.append(outcome.per_id_scores.get(outcome.true_id, -np.inf))
        impostor.extend(v for k, v in sorted(outcome.per_id_scores.items())
                        if k != outcome.true_id)
    roc = roc_curve(genuine, impostor)
    id_set = sorted(set(ids))
    max_rank = min(max_rank, len(id_set))
    result = EvaluationResult(
        probes=outcomes,
        genuine=genuine,
        impostor=impostor,
        roc=roc,
        tar_at_far={far: tar_at_far(roc, far) for far in sorted(set(fars))},
        rank_accuracies=rank_accuracy(outcomes, max_rank),
        id_set=id_set,
        config_hash=config_mod.config_hash(config),
        counts={
            "probes": len(outcomes),
            "identities": len(id_set),
            "genuine": len(genuine),
            "impostor": len(impostor),
        },
    )
    return result


def roc_curve(genuine, impostor) -> list[tuple[float, float]]:
    """(FAR, TAR) points swept over all score thresholds.

    Thresholds run over the union of scores plus +/-inf sentinels; points
    are sorted by FAR with duplicate FARs collapsed to their maximum TAR.
    """
    genuine = np.asarray(list(genuine), dtype=np.float64)
    impostor = np.asarray(list(impostor), dtype=np.float64)
    if genuine.size == 0 or impostor.size == 0:
        raise EmptyScores("need both genuine and impostor scores")
    thresholds = np.unique(np.concatenate([
        genuine[np.isfinite(genuine)], impostor[np.isfinite(impostor)],
        [np.inf]]))
    points = {}
    for tau in thresholds:
        tar = float(np.mean(genuine >= tau))
        far = float(np.mean(impostor >= tau))
        if far not in points or tar > points[far]:
            points[far] = tar
    # tau = -inf endpoint: everything accepted
    points[1.0] = max(points.get(1.0, 0.0), 1.0)
    return sorted(points.items())


def tar_at_far(roc, far_target: float) -> float:
    """TAR at the largest achieved FAR <= far_target (step convention)."""
    if not 0.0 <= far_target <= 1.0:
        raise ValueError("far_target must lie in [0, 1]")
    best_far = -1.0
    best_tar = 0.0
    for far, tar in roc:
        if far <= far_target and far > best_far:
            best_far, best_tar = far, tar
    return best_tar


def rank_accuracy(probes, max_rank: int) -> list[float]:
    """Fraction of probes whose true identity is among the top-k identities.

    Identities are ranked by score with ties resolved toward the
    lexicographically smallest identity (the identification tie-break).
    """
    if max_rank < 1:
        raise ValueError("max_rank must be >= 1")
    probes = list(probes)
    hits = np.zeros(max_rank, dtype=np.int64)
    for outcome in probes:
        ranked = sorted(outcome.per_id_scores.items(),
                        key=lambda kv: (-kv[1], kv[0]))
        position = next((i for i, (k, _) in enumerate(ranked)
                         if k == outcome.true_id), max_rank)
        if position < max_rank:
            hits[position:] += 1
    total = max(len(probes), 1)
    return [float(h) / total for h in hits]


def export_report(result: EvaluationResult, out_dir) -> list[Path]:
    """Write scores.csv, roc.csv and summary.json; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scores_path = out_dir / "scores.csv"
    roc_path = out_dir / "roc.csv"
    summary_path = out_dir / "summary.json"

    with open(scores_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("probe,true_id,predicted_id," +
                 ",".join(result.id_set) + "\n")
        for outcome in result.probes:
            row = [outcome.name, outcome.true_id, outcome.predicted or ""]
            row += [repr(outcome.per_id_scores.get(panda_id, -np.inf))
                    for panda_id in result.id_set]
            fh.write(",".join(row) + "\n")

    with open(roc_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("far,tar\n")
        for far, tar in result.roc:
            fh.write(f"{far!r},{tar!r}\n")

    summary = {
        "counts": result.counts,
        "config_hash": result.config_hash,
        "tar_at_far": {repr(k): v for k, v in sorted(result.tar_at_far.items())},
        "tar_at_far_1pct": result.tar_at_far.get(0.01),
        "rank_accuracies": result.rank_accuracies,
        "rank_1": result.rank_accuracies[0] if result.rank_accuracies else None,
    }
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [scores_path, roc_path, summary_path]
