"""Offline patch-feature extractor writing UCFT/UCMK files and manifests."""

from .extract import ExtractionJob, run
from .formats import downsample_majority, write_feature_grid, write_manifest, write_mask
from .vit import ARCHS, VisionTransformer, build_model

__all__ = [
    "ARCHS",
    "ExtractionJob",
    "VisionTransformer",
    "build_model",
    "downsample_majority",
    "run",
    "write_feature_grid",
    "write_manifest",
    "write_mask",
]

__version__ = "0.1.0"
