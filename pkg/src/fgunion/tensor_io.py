"""Binary tensor formats and dataset manifests.

Three little-endian container formats connect the feature-extraction sidecar,
the core pipeline, and the evaluator:

  UCFT  feature grids   magic "UCFT", u32 version, u32 H, W, D, then H*W*D f32
  UCMK  binary masks    magic "UCMK", u32 version, u32 H, W, then H*W bytes of {0,1}
  UCHT  heat maps       magic "UCHT", u32 version, u32 H, W, then H*W f32

Dataset manifests are UTF-8 text, one entry per line:

  image_id<TAB>feature_path[<TAB>gt_mask_path]

Relative manifest paths are resolved against the manifest file's directory.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

FORMAT_VERSION = 1
NORM_TOL = 1e-3

_FEATURE_MAGIC = b"UCFT"
_MASK_MAGIC = b"UCMK"
_HEATMAP_MAGIC = b"UCHT"


class FormatError(ValueError):
    """Malformed bytes or an invariant violation in a serialized value."""


@dataclass(frozen=True)
class FeatureGrid:
    """H x W grid of D-dimensional unit-norm patch features (float32)."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if not isinstance(d, np.ndarray) or d.ndim != 3:
            raise FormatError("feature grid must be an H x W x D array")
        if d.dtype != np.float32:
            raise FormatError("feature grid must be float32")
        if min(d.shape) < 1:
            raise FormatError("feature grid dimensions must be positive")
        if not np.all(np.isfinite(d)):
            raise FormatError("feature grid contains non-finite values")
        norms = np.linalg.norm(d.astype(np.float64), axis=2)
        if np.any(np.abs(norms - 1.0) > NORM_TOL):
            worst = float(np.abs(norms - 1.0).max())
            raise FormatError(f"patch vectors must be unit norm within {NORM_TOL} (worst {worst:.2e})")

    @classmethod
    def from_array(cls, arr) -> "FeatureGrid":
        return cls(np.ascontiguousarray(arr, dtype=np.float32))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]

    @property
    def n_patches(self) -> int:
        return self.height * self.width

    def flat(self) -> np.ndarray:
        """(H*W, D) row-major view of the patch vectors."""
        return self.data.reshape(self.n_patches, self.dim)


def as_mask(arr) -> np.ndarray:
    """Validate and return an H x W uint8 mask with values in {0, 1}."""
    m = np.asarray(arr)
    if m.ndim != 2 or min(m.shape) < 1:
        raise FormatError("mask must be a 2-D array with positive dimensions")
    m = np.ascontiguousarray(m, dtype=np.uint8)
    if not np.all((m == 0) | (m == 1)):
        raise FormatError("mask values must be exactly 0 or 1")
    return m


def as_heatmap(arr) -> np.ndarray:
    """Validate and return an H x W float32 heat map (finite, nonnegative)."""
    h = np.ascontiguousarray(arr, dtype=np.float32)
    if h.ndim != 2 or min(h.shape) < 1:
        raise FormatError("heat map must be a 2-D array with positive dimensions")
    if not np.all(np.isfinite(h)):
        raise FormatError("heat map contains non-finite values")
    if np.any(h < 0):
        raise FormatError("heat map values must be nonnegative")
    return h


def _open_sink(dest: str | Path | BinaryIO):
    if hasattr(dest, "write"):
        return dest, False
    return open(dest, "wb"), True


def _read_all(source: str | Path | BinaryIO) -> bytes:
    if hasattr(source, "read"):
        return source.read()
    return Path(source).read_bytes()


def _parse_header(raw: bytes, magic: bytes, n_dims: int) -> tuple[tuple[int, ...], bytes]:
    head_len = 4 + 4 * (1 + n_dims)
    if len(raw) < head_len:
        raise FormatError(f"truncated header: {len(raw)} bytes")
    if raw[:4] != magic:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {magic!r}")
    fields = struct.unpack_from(f"<{1 + n_dims}I", raw, 4)
    if fields[0] != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {fields[0]}")
    dims = fields[1:]
    if min(dims) < 1:
        raise FormatError(f"non-positive dimension in header: {dims}")
    return dims, raw[head_len:]


def _check_payload(payload: bytes, expected: int, what: str) -> None:
    if len(payload) < expected:
        raise FormatError(f"truncated {what} payload: {len(payload)} of {expected} bytes")
    if len(payload) > expected:
        raise FormatError(f"trailing data after {what} payload: {len(payload) - expected} bytes")


def write_feature_grid(grid: FeatureGrid, dest: str | Path | BinaryIO) -> None:
    if not isinstance(grid, FeatureGrid):
        grid = FeatureGrid.from_array(grid)
    sink, owned = _open_sink(dest)
    try:
        sink.write(_FEATURE_MAGIC)
        sink.write(struct.pack("<4I", FORMAT_VERSION, grid.height, grid.width, grid.dim))
        sink.write(np.ascontiguousarray(grid.data, dtype="<f4").tobytes())
    finally:
        if owned:
            sink.close()


def read_feature_grid(source: str | Path | BinaryIO) -> FeatureGrid:
    (h, w, d), payload = _parse_header(_read_all(source), _FEATURE_MAGIC, 3)
    _check_payload(payload, h * w * d * 4, "feature")
    data = np.frombuffer(payload, dtype="<f4").reshape(h, w, d)
    return FeatureGrid(np.ascontiguousarray(data, dtype=np.float32))


def write_mask(mask: np.ndarray, dest: str | Path | BinaryIO) -> None:
    m = as_mask(mask)
    sink, owned = _open_sink(dest)
    try:
        sink.write(_MASK_MAGIC)
        sink.write(struct.pack("<3I", FORMAT_VERSION, m.shape[0], m.shape[1]))
        sink.write(m.tobytes())
    finally:
        if owned:
            sink.close()


def read_mask(source: str | Path | BinaryIO) -> np.ndarray:
    (h, w), payload = _parse_header(_read_all(source), _MASK_MAGIC, 2)
    _check_payload(payload, h * w, "mask")
    return as_mask(np.frombuffer(payload, dtype=np.uint8).reshape(h, w))


def write_heatmap(heat: np.ndarray, dest: str | Path | BinaryIO) -> None:
    hm = as_heatmap(heat)
    sink, owned = _open_sink(dest)
    try:
        sink.write(_HEATMAP_MAGIC)
        sink.write(struct.pack("<3I", FORMAT_VERSION, hm.shape[0], hm.shape[1]))
        sink.write(np.ascontiguousarray(hm, dtype="<f4").tobytes())
    finally:
        if owned:
            sink.close()


def read_heatmap(source: str | Path | BinaryIO) -> np.ndarray:
    (h, w), payload = _parse_header(_read_all(source), _HEATMAP_MAGIC, 2)
    _check_payload(payload, h * w * 4, "heat map")
    data = np.frombuffer(payload, dtype="<f4").reshape(h, w)
    return as_heatmap(data)


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    feature_path: Path
    gt_mask_path: Path | None = None


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    """Parse a manifest file, preserving entry order.

    Rejects duplicate image ids and entries whose referenced files do not
    exist. Relative paths are resolved against the manifest's directory.
    """
    path = Path(path)
    base = path.parent
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) not in (2, 3) or not parts[0]:
            raise FormatError(f"{path}:{lineno}: expected image_id<TAB>feature_path[<TAB>gt_mask_path]")
        image_id = parts[0]
        if image_id in seen:
            raise FormatError(f"{path}:{lineno}: duplicate image id {image_id!r}")
        seen.add(image_id)
        feature_path = _resolve(base, parts[1])
        if not feature_path.is_file():
            raise FormatError(f"{path}:{lineno}: feature file not found: {feature_path}")
        gt_path = None
        if len(parts) == 3 and parts[2]:
            gt_path = _resolve(base, parts[2])
            if not gt_path.is_file():
                raise FormatError(f"{path}:{lineno}: gt mask file not found: {gt_path}")
        entries.append(ManifestEntry(image_id, feature_path, gt_path))
    return entries


def write_manifest(entries: list[ManifestEntry], path: str | Path) -> None:
    lines = []
    for e in entries:
        fields = [e.image_id, str(e.feature_path)]
        if e.gt_mask_path is not None:
            fields.append(str(e.gt_mask_path))
        lines.append("\t".join(fields))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _resolve(base: Path, raw: str) -> Path:
    p = Path(raw)
    return p if p.is_absolute() else base / p
