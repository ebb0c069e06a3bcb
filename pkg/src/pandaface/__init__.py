"""Panda face recognition: alignment, texture features, PLS matching."""

from .alignment import (CpdParams, KeyPointSet, align, cpd_affine,
                        sobel_edges, subsample_keypoints)
from .config import RunConfig, config_hash, load_config, save_config
from .evaluation import (EvaluationResult, export_report, leave_one_out,
                         rank_accuracy, roc_curve, tar_at_far)
from .features import (DEFAULT_GRIDS, FeatureConfig, FeatureVector,
                       GaborParams, GridSpec, build_gabor_bank,
                       extract_features, feature_dimension,
                       gabor_orientation_field)
from .image import (AffineTransform, load_image, resize_to_height,
                    save_image, to_grayscale, warp_affine_bicubic)
from .pls import PlsModel, Standardizer, pls_nipals, pls_predict, standardize_fit
from .recognition import (Gallery, GalleryEntry, ScoreVector, enroll,
                          identify, load_gallery, read_manifest, save_gallery,
                          score_probe, verify)
from .synth import generate_dataset

__version__ = "0.1.0"

__all__ = [
    "AffineTransform", "CpdParams", "DEFAULT_GRIDS", "EvaluationResult",
    "FeatureConfig", "FeatureVector", "GaborParams", "Gallery",
    "GalleryEntry", "GridSpec", "KeyPointSet", "PlsModel", "RunConfig",
    "ScoreVector", "Standardizer", "align", "build_gabor_bank",
    "config_hash", "cpd_affine", "enroll", "export_report",
    "extract_features", "feature_dimension", "gabor_orientation_field",
    "generate_dataset", "identify", "leave_one_out", "load_config",
    "load_gallery", "load_image", "pls_nipals", "pls_predict",
    "rank_accuracy", "read_manifest", "resize_to_height", "roc_curve",
    "save_config", "save_gallery", "save_image", "score_probe",
    "sobel_edges", "standardize_fit", "subsample_keypoints", "tar_at_far",
    "to_grayscale", "verify", "warp_affine_bicubic",
]
