"""Command-line front end: enroll / identify / verify / evaluate / synth."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import config as config_mod
from . import evaluation, recognition, synth
from .errors import PandafaceError
from .image import load_image

log = logging.getLogger("pandaface")

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    name = os.environ.get("PANDAFACE_LOG", "warn").strip().lower()
    level = _LOG_LEVELS.get(name, logging.WARNING)
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")


def _load_config(args) -> config_mod.RunConfig:
    if getattr(args, "config", None):
        cfg = config_mod.load_config(args.config)
    else:
        cfg = config_mod.RunConfig()
    if getattr(args, "threads", None):
        cfg = replace(cfg, threads=args.threads)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _load_dataset(manifest_path, require_closed_set: bool):
    rows = recognition.read_manifest(manifest_path)
    if not rows:
        raise PandafaceError(f"manifest {manifest_path} lists no images")
    if require_closed_set:
        counts = {}
        for _, panda_id in rows:
            counts[panda_id] = counts.get(panda_id, 0) + 1
        single = sorted(k for k, v in counts.items() if v < 2)
        if single:
            raise PandafaceError(
                "closed-set requirement violated; single-image identities: "
                + ", ".join(single))
    samples = []
    for path, panda_id in rows:
        if not Path(path).is_file():
            raise PandafaceError(f"image file not found: {path}")
        samples.append((str(path), load_image(path), panda_id))
    return samples


def cmd_enroll(args) -> int:
    cfg = _load_config(args)
    samples = _load_dataset(args.manifest, args.require_closed_set)
    gallery = recognition.enroll([(img, panda_id) for _, img, panda_id in samples],
                                 cfg, threads=cfg.effective_threads())
    recognition.save_gallery(gallery, args.gallery)
    counts = {}
    for entry in gallery.entries:
        counts[entry.panda_id] = counts.get(entry.panda_id, 0) + 1
    print(f"enrolled {len(gallery.entries)} entries "
          f"({len(counts)} identities) -> {args.gallery}")
    for panda_id in sorted(counts):
        print(f"  {panda_id}: {counts[panda_id]}")
    return 0


def cmd_identify(args) -> int:
    gallery = recognition.load_gallery(args.gallery)
    probe = load_image(args.probe)
    scores = recognition.score_probe(probe, gallery,
                                     threads=gallery.config.effective_threads())
    predicted, per_id = recognition.identify(scores)
    print(f"predicted: {predicted}")
    for panda_id, value in sorted(per_id.items(), key=lambda kv: (-kv[1], kv[0])):
        print(f"  {panda_id}\t{value:+.6f}")
    return 0


def cmd_verify(args) -> int:
    gallery = recognition.load_gallery(args.gallery)
    probe = load_image(args.probe)
    scores = recognition.score_probe(probe, gallery,
                                     threads=gallery.config.effective_threads())
    accepted, value = recognition.verify(scores, args.claim, args.threshold)
    print(f"{'accept' if accepted else 'reject'} {args.claim} "
          f"score={value:+.6f} threshold={args.threshold:+.6f}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    samples = _load_dataset(args.manifest, require_closed_set=True)
    fars = sorted(set([0.01] + (args.far or [])))
    result = evaluation.leave_one_out(
        samples, cfg, fars=fars, max_rank=args.max_rank,
        cache_alignments=args.cache_alignments,
        threads=cfg.effective_threads())
    paths = evaluation.export_report(result, args.out)
    for far in fars:
        print(f"TAR@{far:g}FAR: {result.tar_at_far[far]:.4f}")
    print(f"rank-1: {result.rank_accuracies[0]:.4f}")
    print("report: " + ", ".join(str(p) for p in paths))
    return 0


def cmd_synth(args) -> int:
    manifest = synth.generate_dataset(args.out, args.seed, args.ids,
                                      args.per_id)
    print(f"wrote {args.ids * args.per_id} images; manifest: {manifest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pandaface",
        description="Panda face recognition pipeline: alignment, "
                    "LBP/Gabor features, PLS classifiers, evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=False):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--threads", type=int, default=0,
                       help="worker threads (0 = auto)")
        if seed:
            p.add_argument("--seed", type=int, default=None,
                           help="override the config seed")

    p = sub.add_parser("enroll", help="train classifiers from a manifest")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--gallery", required=True, help="output gallery file")
    p.add_argument("--require-closed-set", action="store_true",
                   help="fail when any identity has a single image")
    p.set_defaults(fn=cmd_enroll)

    p = sub.add_parser("identify", help="identify a probe against a gallery")
    p.add_argument("--gallery", required=True)
    p.add_argument("probe", help="probe image path")
    p.set_defaults(fn=cmd_identify)

    p = sub.add_parser("verify", help="verify a claimed identity")
    p.add_argument("--gallery", required=True)
    p.add_argument("--claim", required=True, help="claimed identity")
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("probe", help="probe image path")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("evaluate", help="leave-one-out closed-set evaluation")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--far", action="append", type=float,
                   help="extra FAR operating point (repeatable)")
    p.add_argument("--max-rank", type=int, default=5)
    cache = p.add_mutually_exclusive_group()
    cache.add_argument("--cache-alignments", dest="cache_alignments",
                       action="store_true", default=True,
                       help="memoize pair alignments across folds (default)")
    cache.add_argument("--no-cache-alignments", dest="cache_alignments",
                       action="store_false")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic fixture dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ids", type=int, default=8)
    p.add_argument("--per-id", type=int, default=6)
    p.set_defaults(fn=cmd_synth)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except PandafaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
