"""Writers for the binary interchange formats and dataset manifests.

Deliberately duplicated from the core package so the extractor carries no
dependency on it; the bytes are the contract. Layouts (little-endian):

  UCFT  magic "UCFT", u32 version=1, u32 H, W, D, then H*W*D float32
  UCMK  magic "UCMK", u32 version=1, u32 H, W, then H*W bytes of {0, 1}

Manifests are UTF-8 text, one image per line:

  image_id<TAB>feature_path[<TAB>gt_mask_path]

with paths relative to the manifest file's directory.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
NORM_TOL = 1e-3

_FEATURE_MAGIC = b"UCFT"
_MASK_MAGIC = b"UCMK"


def write_feature_grid(data: np.ndarray, dest: str | Path) -> None:
    arr = np.ascontiguousarray(data, dtype=np.float32)
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise ValueError("feature grid must be an H x W x D array")
    if not np.all(np.isfinite(arr)):
        raise ValueError("feature grid contains non-finite values")
    norms = np.linalg.norm(arr.astype(np.float64), axis=2)
    if np.any(np.abs(norms - 1.0) > NORM_TOL):
        worst = float(np.abs(norms - 1.0).max())
        raise ValueError(f"patch vectors must be unit norm within {NORM_TOL} (worst {worst:.2e})")
    h, w, d = arr.shape
    with open(dest, "wb") as sink:
        sink.write(_FEATURE_MAGIC)
        sink.write(struct.pack("<4I", FORMAT_VERSION, h, w, d))
        sink.write(arr.astype("<f4").tobytes())


def write_mask(mask: np.ndarray, dest: str | Path) -> None:
    m = np.ascontiguousarray(mask, dtype=np.uint8)
    if m.ndim != 2 or min(m.shape) < 1:
        raise ValueError("mask must be a 2-D array with positive dimensions")
    if not np.all((m == 0) | (m == 1)):
        raise ValueError("mask values must be exactly 0 or 1")
    with open(dest, "wb") as sink:
        sink.write(_MASK_MAGIC)
        sink.write(struct.pack("<3I", FORMAT_VERSION, m.shape[0], m.shape[1]))
        sink.write(m.tobytes())


def write_manifest(lines: list[tuple[str, str, str | None]], dest: str | Path) -> None:
    rows = []
    for image_id, feature_path, gt_path in lines:
        fields = [image_id, feature_path]
        if gt_path is not None:
            fields.append(gt_path)
        rows.append("\t".join(fields))
    Path(dest).write_text("\n".join(rows) + "\n", encoding="utf-8")


def downsample_majority(pixel_mask: np.ndarray, height: int, width: int) -> np.ndarray:
    """Majority-vote downsampling of a pixel mask to a patch grid.

    Cell (i, j) covers pixel rows [floor(i*H/height), floor((i+1)*H/height))
    and the analogous columns; at least half foreground marks the cell (ties
    count as foreground). Must stay bit-identical to the evaluator's rule.
    """
    m = np.ascontiguousarray(pixel_mask, dtype=np.uint8)
    ph, pw = m.shape
    if height < 1 or width < 1 or height > ph or width > pw:
        raise ValueError("target grid must be positive and no larger than the mask")
    row_edges = (np.arange(height + 1) * ph) // height
    col_edges = (np.arange(width + 1) * pw) // width
    sums = np.add.reduceat(np.add.reduceat(m.astype(np.int64), row_edges[:-1], axis=0),
                           col_edges[:-1], axis=1)
    cell_sizes = np.outer(np.diff(row_edges), np.diff(col_edges))
    return (2 * sums >= cell_sizes).astype(np.uint8)
