"""Vote aggregation and the full foreground-union pipeline.

Every patch seeds one weak classifier; their binary votes are summed into an
aggregate map, brightness-inverted to 0..255, thresholded by 1-D mean shift
(top half of the clusters by center), and finally complemented when the
candidate mask covers all four grid corners (a foreground filling every
corner means the figure/ground assignment flipped).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from fgunion.tensor_io import FeatureGrid, as_heatmap, as_mask
from fgunion.unit_voter import VoterContext, run_unit_voter

DEFAULT_BANDWIDTH = 25.5
MEANSHIFT_TOL = 1e-3
MEANSHIFT_MAX_ITER = 100


@dataclass(frozen=True)
class UnionCutOutput:
    aggregate: np.ndarray       # float32 vote counts per patch
    inverted: np.ndarray        # float32 in [0, 255]
    union_mask: np.ndarray      # uint8 {0, 1}
    corner_inverted: bool


def aggregate_votes(masks) -> np.ndarray:
    """Per-patch vote counts from one mask per seed patch.

    Sums are exact integer counts, returned as float32 (counts are far below
    the float32 integer limit).
    """
    masks = [as_mask(m) for m in masks]
    if not masks:
        raise ValueError("no masks to aggregate")
    shape = masks[0].shape
    if any(m.shape != shape for m in masks):
        raise ValueError("masks have mismatched dimensions")
    if len(masks) != shape[0] * shape[1]:
        raise ValueError(f"expected one mask per patch ({shape[0] * shape[1]}), got {len(masks)}")
    votes = np.zeros(shape, dtype=np.int64)
    for m in masks:
        votes += m
    return votes.astype(np.float32)


def invert_heatmap(aggregate) -> np.ndarray:
    """Rescale votes to 0..255 with brightness inverted.

    Patches with few votes (foreground candidates) map to 255, the most-voted
    patches to 0. A constant aggregate has no structure and maps to all zeros.
    """
    a = as_heatmap(aggregate).astype(np.float64)
    lo, hi = float(a.min()), float(a.max())
    if hi == lo:
        return np.zeros(a.shape, dtype=np.float32)
    return (255.0 * (1.0 - (a - lo) / (hi - lo))).astype(np.float32)


def _meanshift_modes(values: np.ndarray, bandwidth: float, tol: float, max_iter: int):
    """Unique values of the multiset and the mode each one converges to."""
    uniq, counts = np.unique(values, return_counts=True)
    prefix_n = np.concatenate(([0], np.cumsum(counts)))
    prefix_sum = np.concatenate(([0.0], np.cumsum(uniq * counts)))
    modes = np.empty(uniq.size)
    for k in range(uniq.size):
        m = float(uniq[k])
        for _ in range(max_iter):
            lo = int(np.searchsorted(uniq, m - bandwidth, side="left"))
            hi = int(np.searchsorted(uniq, m + bandwidth, side="right"))
            shifted = (prefix_sum[hi] - prefix_sum[lo]) / (prefix_n[hi] - prefix_n[lo])
            moved = abs(shifted - m)
            m = float(shifted)
            if moved < tol:
                break
        modes[k] = m
    return uniq, modes


def meanshift_clusters(values, bandwidth: float = DEFAULT_BANDWIDTH,
                       tol: float = MEANSHIFT_TOL,
                       max_iter: int = MEANSHIFT_MAX_ITER) -> tuple[np.ndarray, np.ndarray]:
    """Flat-kernel 1-D mean-shift clustering of a value multiset.

    Every value is shifted to its mode; modes are merged greedily in
    descending order when within bandwidth/2 of their cluster's founding
    mode. Returns (labels, centers): labels[i] is the cluster of values[i],
    clusters numbered 0.. in descending founding-mode order.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("no values to cluster")
    uniq, modes = _meanshift_modes(values, float(bandwidth), tol, max_iter)
    order = np.argsort(-modes, kind="stable")
    cluster_of_uniq = np.empty(uniq.size, dtype=np.int64)
    centers: list[float] = []
    for idx in order:
        m = modes[idx]
        if centers and centers[-1] - m <= bandwidth / 2.0:
            cluster_of_uniq[idx] = len(centers) - 1
        else:
            centers.append(float(m))
            cluster_of_uniq[idx] = len(centers) - 1
    labels = cluster_of_uniq[np.searchsorted(uniq, values)]
    return labels, np.asarray(centers)


def meanshift_threshold(heat, bandwidth: float = DEFAULT_BANDWIDTH,
                        tol: float = MEANSHIFT_TOL, max_iter: int = MEANSHIFT_MAX_ITER) -> np.ndarray:
    """Foreground mask from 1-D mean-shift clustering of the heat values.

    Patches belonging to the top ceil(k/2) clusters by center are selected.
    A constant map has no clusters and yields an empty mask.
    """
    h = as_heatmap(heat)
    values = h.ravel().astype(np.float64)
    if values.max() == values.min():
        return np.zeros(h.shape, dtype=np.uint8)
    labels, centers = meanshift_clusters(values, bandwidth, tol, max_iter)
    keep = math.ceil(centers.size / 2)
    mask = (labels < keep).reshape(h.shape)
    return mask.astype(np.uint8)


def apply_corner_prior(mask) -> tuple[np.ndarray, bool]:
    """Complement the mask when it covers all four grid corners."""
    m = as_mask(mask)
    corners = (m[0, 0], m[0, -1], m[-1, 0], m[-1, -1])
    if all(c == 1 for c in corners):
        return (1 - m).astype(np.uint8), True
    return m, False


def union_cut(grid: FeatureGrid, bandwidth: float = DEFAULT_BANDWIDTH,
              workers: int | None = None) -> UnionCutOutput:
    """Foreground union of a feature grid.

    Runs one weak classifier per seed patch (fanned out on a thread pool),
    aggregates the votes, inverts, thresholds by mean shift, and applies the
    corner prior. Output is independent of worker count and execution order:
    votes land in per-seed slots and are reduced by a fixed-order integer sum.
    """
    ctx = VoterContext(grid)
    n = grid.n_patches
    votes_by_seed = np.empty((n, grid.height, grid.width), dtype=np.uint8)

    def solve_one(f: int) -> None:
        votes_by_seed[f] = run_unit_voter(ctx, f)

    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1:
        for f in range(n):
            solve_one(f)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(solve_one, range(n)))

    votes = votes_by_seed.sum(axis=0, dtype=np.int64)
    aggregate = votes.astype(np.float32)
    inverted = invert_heatmap(aggregate)
    candidate = meanshift_threshold(inverted, bandwidth=bandwidth)
    union_mask, flipped = apply_corner_prior(candidate)
    return UnionCutOutput(aggregate, inverted, union_mask, flipped)
