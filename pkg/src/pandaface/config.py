"""Run configuration: defaults, JSON round-trip, hashing."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

from .alignment import DEFAULT_SOBEL_THRESHOLD, CpdParams
from .errors import ConfigError
from .features import FeatureConfig, GaborParams, GridSpec

CONFIG_VERSION = 1

DEFAULT_PLS_COMPONENTS = 15


@dataclass(frozen=True)
class RunConfig:
    features: FeatureConfig = FeatureConfig()
    cpd: CpdParams = CpdParams()
    pls_components: int = DEFAULT_PLS_COMPONENTS
    sobel_threshold: float = DEFAULT_SOBEL_THRESHOLD
    seed: int = 0
    threads: int = 0  # 0 means use the machine's available parallelism

    def __post_init__(self):
        if self.pls_components < 1:
            raise ConfigError("pls_components must be >= 1")
        if not 0.0 < self.sobel_threshold <= 1.0:
            raise ConfigError("sobel_threshold must lie in (0, 1]")
        if self.threads < 0:
            raise ConfigError("threads must be >= 0")

    def effective_threads(self) -> int:
        if self.threads > 0:
            return self.threads
        return os.cpu_count() or 1


def _require_keys(obj: dict, allowed: set, context: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {context}: {sorted(unknown)}")


def to_json_dict(config: RunConfig) -> dict:
    return {
        "version": CONFIG_VERSION,
        "features": {
            "grids": [
                {"name": g.name, "cols": g.cols, "rows": g.rows,
                 "lbp_variant": g.lbp_variant}
                for g in config.features.grids
            ],
            "gabor": {
                "wavelengths": list(config.features.gabor.wavelengths),
                "num_orientations": config.features.gabor.num_orientations,
                "sigma_ratio": config.features.gabor.sigma_ratio,
                "aspect_ratio": config.features.gabor.aspect_ratio,
            },
        },
        "cpd": {
            "outlier_weight": config.cpd.outlier_weight,
            "max_iterations": config.cpd.max_iterations,
            "tolerance": config.cpd.tolerance,
            "max_points": config.cpd.max_points,
        },
        "pls_components": config.pls_components,
        "sobel_threshold": config.sobel_threshold,
        "seed": config.seed,
        "threads": config.threads,
    }


def from_json_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    _require_keys(doc, {"version", "features", "cpd", "pls_components",
                        "sobel_threshold", "seed", "threads"}, "config")
    version = doc.get("version")
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version!r}")
    try:
        feats = doc.get("features", {})
        _require_keys(feats, {"grids", "gabor"}, "features")
        if "grids" in feats:
            grids = []
            for i, g in enumerate(feats["grids"]):
                _require_keys(g, {"name", "cols", "rows", "lbp_variant"},
                              f"features.grids[{i}]")
                grids.append(GridSpec(g["name"], int(g["cols"]), int(g["rows"]),
                                      g["lbp_variant"]))
            grids = tuple(grids)
        else:
            grids = DEFAULT_FEATURES.grids
        gab = feats.get("gabor", {})
        _require_keys(gab, {"wavelengths", "num_orientations", "sigma_ratio",
                            "aspect_ratio"}, "features.gabor")
        gabor = GaborParams(
            wavelengths=tuple(gab.get("wavelengths", GaborParams().wavelengths)),
            num_orientations=int(gab.get("num_orientations", 16)),
            sigma_ratio=float(gab.get("sigma_ratio", 0.56)),
            aspect_ratio=float(gab.get("aspect_ratio", 0.5)))
        features = FeatureConfig(grids, gabor)
        cpd_doc = doc.get("cpd", {})
        _require_keys(cpd_doc, {"outlier_weight", "max_iterations",
                                "tolerance", "max_points"}, "cpd")
        cpd_defaults = CpdParams()
        cpd = CpdParams(
            outlier_weight=float(cpd_doc.get("outlier_weight",
                                             cpd_defaults.outlier_weight)),
            max_iterations=int(cpd_doc.get("max_iterations",
                                           cpd_defaults.max_iterations)),
            tolerance=float(cpd_doc.get("tolerance", cpd_defaults.tolerance)),
            max_points=int(cpd_doc.get("max_points", cpd_defaults.max_points)))
        return RunConfig(
            features=features,
            cpd=cpd,
            pls_components=int(doc.get("pls_components", DEFAULT_PLS_COMPONENTS)),
            sobel_threshold=float(doc.get("sobel_threshold",
                                          DEFAULT_SOBEL_THRESHOLD)),
            seed=int(doc.get("seed", 0)),
            threads=int(doc.get("threads", 0)))
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc


DEFAULT_FEATURES = FeatureConfig()


def dumps(config: RunConfig) -> str:
    """Canonical JSON text; dump -> load -> dump is byte-identical."""
    return json.dumps(to_json_dict(config), indent=2, sort_keys=True) + "\n"


def loads(text: str) -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return from_json_dict(doc)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())


def save_config(config: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(config))


def config_hash(config: RunConfig) -> str:
    return hashlib.sha256(dumps(config).encode("utf-8")).hexdigest()
