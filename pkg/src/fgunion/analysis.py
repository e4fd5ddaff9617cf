"""Evaluation metrics and the statistical estimators over labeled data.

Covers per-mask metrics with explicit empty-set conventions, box-level
localization scoring, the dataset-level union success rate, the four
misclassification estimators for seed classifiers (with an algebraic solver
turning them into a background-fraction threshold), the corner-prior audit,
and the precision-gate / coverage-stop contract used when consuming union
masks from a discovery loop.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fgunion.tensor_io import FeatureGrid, as_mask
from fgunion.unit_voter import VoterContext, run_unit_voter


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    iou: float
    precision: float
    recall: float
    f_beta: float


@dataclass(frozen=True)
class MceEstimate:
    """Conditional misclassification rates of a seed classifier.

    a: foreground seed claims background; b: background seed claims
    background; c: foreground seed claims foreground; d: background seed
    claims foreground.
    """

    a: float
    b: float
    c: float
    d: float
    images_used: int
    seeds_used: int
    images_skipped: int


@dataclass(frozen=True)
class IneqSolution:
    comparator: str  # one of greater, less, always, never
    threshold: float | None


def _check_same_shape(pred: np.ndarray, gt: np.ndarray) -> None:
    if pred.shape != gt.shape:
        raise ValueError(f"mask dimensions differ: {pred.shape} vs {gt.shape}")


def mask_metrics(pred, gt, beta: float = 0.3) -> MetricsReport:
    """Accuracy, IoU, precision, recall and F_beta of a predicted mask.

    Empty-set conventions: IoU of two empty masks is 1, precision of an empty
    prediction is 1, recall against an empty ground truth is 1, and F_beta is
    0 when precision and recall are both 0.
    """
    p = as_mask(pred)
    g = as_mask(gt)
    _check_same_shape(p, g)
    inter = int(np.logical_and(p, g).sum())
    union = int(np.logical_or(p, g).sum())
    n_pred = int(p.sum())
    n_gt = int(g.sum())
    accuracy = float((p == g).mean())
    iou = 1.0 if union == 0 else inter / union
    precision = 1.0 if n_pred == 0 else inter / n_pred
    recall = 1.0 if n_gt == 0 else inter / n_gt
    if precision == 0.0 and recall == 0.0:
        f_beta = 0.0
    else:
        b2 = beta * beta
        f_beta = (1.0 + b2) * precision * recall / (b2 * precision + recall)
    return MetricsReport(accuracy, iou, precision, recall, f_beta)


def _box_area(box) -> float:
    r0, c0, r1, c1 = box
    return max(0.0, r1 - r0) * max(0.0, c1 - c0)


def _box_iou(a, b) -> float:
    ir = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    ic = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ir * ic
    union = _box_area(a) + _box_area(b) - inter
    return 0.0 if union <= 0 else inter / union


def corloc(pred_box, gt_boxes: Sequence) -> int:
    """1 when the box overlaps some ground-truth box with IoU strictly above 0.5.

    Boxes are half-open (row0, col0, row1, col1) rectangles.
    """
    for box in (pred_box, *gt_boxes):
        r0, c0, r1, c1 = box
        if r1 < r0 or c1 < c0:
            raise ValueError(f"box has negative extent: {box}")
    return 1 if any(_box_iou(pred_box, g) > 0.5 for g in gt_boxes) else 0


def mask_to_box(mask) -> tuple[int, int, int, int]:
    """Tight half-open bounding rectangle of the mask's 1-patches."""
    m = as_mask(mask)
    rows = np.flatnonzero(m.any(axis=1))
    if rows.size == 0:
        raise ValueError("cannot bound an empty mask")
    cols = np.flatnonzero(m.any(axis=0))
    return int(rows[0]), int(cols[0]), int(rows[-1]) + 1, int(cols[-1]) + 1


def corunion(preds: Sequence, gts: Sequence, metric: str = "iou", threshold: float = 0.5) -> float:
    """Fraction of images whose chosen metric strictly exceeds the threshold."""
    if metric not in ("iou", "precision", "recall"):
        raise ValueError(f"unknown metric {metric!r}")
    preds = list(preds)
    gts = list(gts)
    if not preds or len(preds) != len(gts):
        raise ValueError("need equal-length, nonempty prediction and ground-truth lists")
    hits = 0
    for p, g in zip(preds, gts):
        value = getattr(mask_metrics(p, g), metric)
        hits += value > threshold
    return hits / len(preds)


def downsample_gt(pixel_mask, height: int, width: int) -> np.ndarray:
    """Majority-vote downsampling of a pixel mask to a patch grid.

    Each patch cell covers pixel rows [floor(i*H/height), floor((i+1)*H/height))
    and the analogous columns; a cell is foreground when at least half its
    pixels are (ties count as foreground, favoring recall).
    """
    m = as_mask(pixel_mask)
    ph, pw = m.shape
    if height < 1 or width < 1 or height > ph or width > pw:
        raise ValueError("target grid must be positive and no larger than the mask")
    row_edges = (np.arange(height + 1) * ph) // height
    col_edges = (np.arange(width + 1) * pw) // width
    sums = np.add.reduceat(np.add.reduceat(m.astype(np.int64), row_edges[:-1], axis=0),
                           col_edges[:-1], axis=1)
    cell_sizes = np.outer(np.diff(row_edges), np.diff(col_edges))
    return (2 * sums >= cell_sizes).astype(np.uint8)


def _image_rng(seed: int, image_id: str) -> np.random.Generator:
    digest = hashlib.sha256(image_id.encode("utf-8")).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "little")])


def _classify_cosine(ctx: VoterContext, seed_idx: int) -> np.ndarray:
    return ctx.gram[seed_idx] > 0.0


def _classify_uv(ctx: VoterContext, seed_idx: int) -> np.ndarray:
    return run_unit_voter(ctx, seed_idx).ravel().astype(bool)


def estimate_mce(samples: Sequence[tuple[str, FeatureGrid, np.ndarray]],
                 classifier: str = "unit_voter",
                 subsample_seeds: int | None = None,
                 seed: int = 3407,
                 workers: int | None = None) -> MceEstimate:
    """Estimate the four seed-classifier rates over a labeled dataset.

    For every image with nonempty foreground F and background B, each seed s
    produces a claimed-foreground set; its overlap fractions with B and F are
    accumulated by seed class and normalized by the number of seeds of that
    class. Images with an empty F or B are skipped but counted. Seed
    subsampling (when requested) draws per-image subsets from an RNG keyed on
    the image id, and contributions are reduced in sorted image-id order, so
    the result is independent of manifest ordering and worker count.
    """
    if classifier not in ("unit_voter", "cosine"):
        raise ValueError(f"unknown classifier {classifier!r}")
    if subsample_seeds is not None and subsample_seeds < 1:
        raise ValueError("subsample_seeds must be positive")
    samples = list(samples)
    ids = [s[0] for s in samples]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate image ids")

    def per_image(item):
        image_id, grid, gt = item
        g = as_mask(gt)
        if g.shape != (grid.height, grid.width):
            raise ValueError(f"{image_id}: ground truth dimensions do not match the grid")
        flat_gt = g.ravel().astype(bool)
        n = flat_gt.size
        fg = np.flatnonzero(flat_gt)
        bg = np.flatnonzero(~flat_gt)
        if fg.size == 0 or bg.size == 0:
            return image_id, None
        if subsample_seeds is not None and subsample_seeds < n:
            rng = _image_rng(seed, image_id)
            seeds = np.sort(rng.choice(n, size=subsample_seeds, replace=False))
        else:
            seeds = np.arange(n)
        ctx = VoterContext(grid)
        classify = _classify_uv if classifier == "unit_voter" else _classify_cosine
        a_terms, b_terms, c_terms, d_terms = [], [], [], []
        for s in seeds.tolist():
            claimed = classify(ctx, s)
            r_bg = float(claimed[bg].sum()) / bg.size
            r_fg = float(claimed[fg].sum()) / fg.size
            if flat_gt[s]:
                a_terms.append(r_bg)
                c_terms.append(r_fg)
            else:
                b_terms.append(r_bg)
                d_terms.append(r_fg)
        return image_id, (math.fsum(a_terms), math.fsum(b_terms), math.fsum(c_terms),
                          math.fsum(d_terms), len(a_terms), len(b_terms))

    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(samples) <= 1:
        partials = [per_image(item) for item in samples]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(per_image, samples))

    partials.sort(key=lambda kv: kv[0])
    used = [p for _, p in partials if p is not None]
    skipped = len(partials) - len(used)
    if not used:
        raise ValueError("no usable images: every image has an empty foreground or background")
    fg_seeds = sum(p[4] for p in used)
    bg_seeds = sum(p[5] for p in used)
    a = math.fsum(p[0] for p in used) / fg_seeds if fg_seeds else 0.0
    b = math.fsum(p[1] for p in used) / bg_seeds if bg_seeds else 0.0
    c = math.fsum(p[2] for p in used) / fg_seeds if fg_seeds else 0.0
    d = math.fsum(p[3] for p in used) / bg_seeds if bg_seeds else 0.0
    return MceEstimate(a, b, c, d, len(used), fg_seeds + bg_seeds, skipped)


def solve_inequality(e: MceEstimate) -> IneqSolution:
    """Background-fraction condition under which background outvotes foreground.

    With q the probability that a seed lies in the background, the expected
    vote advantage of background patches is q*(b-d) + (1-q)*(a-c) > 0;
    rearranged around delta = a-c and sigma = (d-b)+(a-c) this yields a
    threshold on q whose direction follows sigma's sign.
    """
    for name in ("a", "b", "c", "d"):
        v = getattr(e, name)
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"estimate {name}={v} outside [0, 1]")
    delta = e.a - e.c
    sigma = (e.d - e.b) + (e.a - e.c)
    if sigma < 0:
        return IneqSolution("greater", delta / sigma)
    if sigma > 0:
        return IneqSolution("less", delta / sigma)
    return IneqSolution("always" if delta > 0 else "never", None)


def corner_prior_success_rate(gt_masks: Sequence) -> float:
    """Fraction of ground-truth unions that leave at least one corner empty."""
    masks = [as_mask(m) for m in gt_masks]
    if not masks:
        raise ValueError("no ground-truth masks")
    ok = sum(1 for m in masks
             if not (m[0, 0] and m[0, -1] and m[-1, 0] and m[-1, -1]))
    return ok / len(masks)


def judge_foreground(candidate, union, theta: float = 0.5) -> bool:
    """Accept a candidate mask when its precision against the union exceeds theta.

    An empty candidate carries no evidence and is always rejected.
    """
    cand = as_mask(candidate)
    uni = as_mask(union)
    _check_same_shape(cand, uni)
    if cand.sum() == 0:
        return False
    return mask_metrics(cand, uni).precision > theta


def should_stop(discovered: Sequence, union, gamma: float = 0.8) -> bool:
    """Stop once the discovered masks cover at least gamma of the union."""
    uni = as_mask(union)
    total = int(uni.sum())
    if total == 0:
        return True
    covered = np.zeros_like(uni)
    for m in discovered:
        d = as_mask(m)
        _check_same_shape(d, uni)
        covered |= d
    return int(np.logical_and(covered, uni).sum()) / total >= gamma
