"""Batch feature extraction over an image directory."""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .formats import downsample_majority, write_feature_grid, write_manifest, write_mask
from .vit import ARCHS, build_model

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".webp"}


@dataclass(frozen=True)
class ExtractionJob:
    image_dir: Path
    out_dir: Path
    arch: str = "vits8"
    resize: int = 224
    gt_dir: Path | None = None
    weights: Path | None = None
    seed: int = 0

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"unknown architecture {self.arch!r}, expected one of {sorted(ARCHS)}")
        patch = ARCHS[self.arch]["patch"]
        if self.resize < patch or self.resize % patch != 0:
            raise ValueError(f"resize {self.resize} must be a positive multiple of patch size {patch}")
        if not self.image_dir.is_dir():
            raise ValueError(f"image directory not found: {self.image_dir}")
        if not self.out_dir.is_dir():
            raise ValueError(f"output directory not found: {self.out_dir}")
        if self.gt_dir is not None and not self.gt_dir.is_dir():
            raise ValueError(f"ground-truth directory not found: {self.gt_dir}")


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _load_image(path: Path, resize: int) -> torch.Tensor | None:
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB").resize((resize, resize), Image.BILINEAR)
    except (UnidentifiedImageError, OSError) as exc:
        _warn(f"skipping undecodable image {path.name}: {exc}")
        return None
    arr = np.asarray(rgb, dtype=np.float32) / 255.0
    arr = (arr - IMAGENET_MEAN) / IMAGENET_STD
    return torch.from_numpy(arr.transpose(2, 0, 1)).unsqueeze(0)


def _find_gt(gt_dir: Path, stem: str) -> Path | None:
    for suffix in sorted(_IMAGE_SUFFIXES):
        candidate = gt_dir / f"{stem}{suffix}"
        if candidate.is_file():
            return candidate
    return None


def _load_gt_grid(path: Path, grid: tuple[int, int]) -> np.ndarray | None:
    try:
        with Image.open(path) as img:
            pixels = np.asarray(img.convert("L"))
    except (UnidentifiedImageError, OSError) as exc:
        _warn(f"skipping unreadable ground truth {path.name}: {exc}")
        return None
    return downsample_majority((pixels > 0).astype(np.uint8), grid[0], grid[1])


def run(job: ExtractionJob) -> Path:
    """Extract features for every decodable image; returns the manifest path.

    Images are visited in sorted filename order and manifest lines keep that
    order. Undecodable files are skipped with a warning.
    """
    if job.weights is None:
        _warn("no pretrained weights given; using a seeded random "
              "initialization, extracted features carry no semantics")
    model = build_model(job.arch, job.weights, job.seed)

    candidates = sorted(p for p in job.image_dir.iterdir()
                        if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES)
    if not candidates:
        raise ValueError(f"no image files in {job.image_dir}")

    lines: list[tuple[str, str, str | None]] = []
    seen: set[str] = set()
    for path in candidates:
        if path.stem in seen:
            _warn(f"skipping {path.name}: duplicate image id {path.stem!r}")
            continue
        batch = _load_image(path, job.resize)
        if batch is None:
            continue
        keys, grid = model.last_layer_keys(batch)
        feats = keys[0].numpy().astype(np.float64)
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
        feats = feats.reshape(grid[0], grid[1], -1).astype(np.float32)

        feature_name = f"{path.stem}.ucft"
        write_feature_grid(feats, job.out_dir / feature_name)
        gt_name = None
        if job.gt_dir is not None:
            gt_path = _find_gt(job.gt_dir, path.stem)
            if gt_path is None:
                _warn(f"no ground truth found for {path.stem!r}")
            else:
                gt_grid = _load_gt_grid(gt_path, grid)
                if gt_grid is not None:
                    gt_name = f"{path.stem}_gt.ucmk"
                    write_mask(gt_grid, job.out_dir / gt_name)
        lines.append((path.stem, feature_name, gt_name))
        seen.add(path.stem)

    if not lines:
        raise ValueError("no image could be decoded")
    manifest = job.out_dir / "manifest.txt"
    write_manifest(lines, manifest)
    return manifest
