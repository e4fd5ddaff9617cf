"""Seed-patch weak classifiers over a feature grid.

Each patch of the grid seeds one weak classifier: an s-t min cut on the
8-connected patch graph whose n-link weights follow feature affinity, whose
seed is tied to the source with a dominating weight, and whose anti-seeds
(patches with negative dot product to the seed) are tied to the target. The
source side of the cut is the region the classifier votes for.

All per-image quantities (adjacency, n-link weights, beta, the dominating
weight, pairwise feature distances) are computed once in a VoterContext and
shared read-only across the per-seed solves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fgunion.maxflow import CsrGraph, FlowNetwork
from fgunion.tensor_io import FeatureGrid

BETA_FLOOR = 1e-6


def _grid_pairs(height: int, width: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unordered 8-neighbor pairs as flat indices plus grid distances."""
    idx = np.arange(height * width, dtype=np.int64).reshape(height, width)
    us, vs, ds = [], [], []
    for du, dv, dist in (
        ((slice(None), slice(None, -1)), (slice(None), slice(1, None)), 1.0),      # right
        ((slice(None, -1), slice(None)), (slice(1, None), slice(None)), 1.0),      # down
        ((slice(None, -1), slice(None, -1)), (slice(1, None), slice(1, None)), math.sqrt(2.0)),  # down-right
        ((slice(None, -1), slice(1, None)), (slice(1, None), slice(None, -1)), math.sqrt(2.0)),  # down-left
    ):
        a = idx[du].ravel()
        b = idx[dv].ravel()
        us.append(a)
        vs.append(b)
        ds.append(np.full(a.size, dist))
    return np.concatenate(us), np.concatenate(vs), np.concatenate(ds)


def compute_beta(grid: FeatureGrid) -> float:
    """Normalization of the n-link exponent.

    Twice the mean squared feature distance over adjacent patch pairs, each
    link counted in both directions; floored at BETA_FLOOR for grids whose
    adjacent features are all identical.
    """
    if grid.n_patches < 2:
        raise ValueError("beta needs at least two patches (a 1x1 grid has no links)")
    flat = grid.flat().astype(np.float64)
    iu, iv, _ = _grid_pairs(grid.height, grid.width)
    diffs = flat[iu] - flat[iv]
    d2 = np.einsum("ij,ij->i", diffs, diffs)
    beta = 2.0 * float(d2.sum()) / float(d2.size)
    return max(beta, BETA_FLOOR)


def nlink_weight(grid: FeatureGrid, i: int, j: int, beta: float) -> float:
    """Affinity weight of the n-link between two adjacent patches."""
    h, w = grid.height, grid.width
    yi, xi = divmod(int(i), w)
    yj, xj = divmod(int(j), w)
    if not (0 <= i < h * w and 0 <= j < h * w):
        raise ValueError("patch index out of range")
    if i == j or abs(yi - yj) > 1 or abs(xi - xj) > 1:
        raise ValueError(f"patches {i} and {j} are not 8-neighbors")
    flat = grid.flat().astype(np.float64)
    d2 = float(((flat[i] - flat[j]) ** 2).sum())
    dist = math.hypot(yi - yj, xi - xj)
    return math.exp(-d2 / beta) / dist


def _pair_weights(grid: FeatureGrid, beta: float):
    flat = grid.flat().astype(np.float64)
    iu, iv, dist = _grid_pairs(grid.height, grid.width)
    diffs = flat[iu] - flat[iv]
    d2 = np.einsum("ij,ij->i", diffs, diffs)
    return iu, iv, np.exp(-d2 / beta) / dist


def big_weight(grid: FeatureGrid, beta: float) -> float:
    """Dominating terminal weight: 1 + the largest per-patch n-link sum."""
    iu, iv, w = _pair_weights(grid, beta)
    sums = np.zeros(grid.n_patches)
    np.add.at(sums, iu, w)
    np.add.at(sums, iv, w)
    return 1.0 + float(sums.max())


@dataclass(frozen=True)
class SeedContext:
    """A seed patch and the patches that oppose it (negative dot product)."""

    seed_index: int
    anti_seed: np.ndarray  # int64 patch indices, may be empty


def build_seed_context(grid: FeatureGrid, seed_index: int) -> SeedContext:
    n = grid.n_patches
    if not 0 <= seed_index < n:
        raise ValueError("seed index out of range")
    flat = grid.flat().astype(np.float64)
    dots = flat @ flat[seed_index]
    anti = np.flatnonzero(dots < 0.0)
    return SeedContext(int(seed_index), anti[anti != seed_index])


def tlink_weights(grid: FeatureGrid, ctx: SeedContext, i: int) -> tuple[float, float]:
    """Terminal capacities for a non-seed, non-anti-seed patch.

    With d_f the feature distance to the seed and d_b the distance to the
    nearest anti-seed, the pair is the negative log-softmax over (d_f, d_b):
    keeping the source link costs log(1 + e^(d_b - d_f)), the target link
    log(1 + e^(d_f - d_b)). A patch close to the seed therefore keeps a
    strong source link.
    """
    if ctx.anti_seed.size == 0:
        raise ValueError("anti-seed set is empty; the degenerate all-ones path applies")
    if i == ctx.seed_index or i in set(ctx.anti_seed.tolist()):
        raise ValueError("terminal weights are only defined for unconstrained patches")
    flat = grid.flat().astype(np.float64)
    d_f = float(np.linalg.norm(flat[i] - flat[ctx.seed_index]))
    d_b = float(np.min(np.linalg.norm(flat[ctx.anti_seed] - flat[i], axis=1)))
    w_source = float(np.logaddexp(0.0, d_b - d_f))
    w_target = float(np.logaddexp(0.0, d_f - d_b))
    return w_source, w_target


class VoterContext:
    """Per-image shared state for all seed classifiers of one grid."""

    __slots__ = ("grid", "beta", "big_w", "gram", "dist", "pair_u", "pair_v", "pair_w", "csr")

    def __init__(self, grid: FeatureGrid):
        if grid.n_patches < 2:
            raise ValueError("voting needs at least two patches")
        self.grid = grid
        self.beta = compute_beta(grid)
        flat = grid.flat().astype(np.float64)
        self.gram = flat @ flat.T
        sq = np.einsum("ij,ij->i", flat, flat)
        d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * self.gram, 0.0)
        self.dist = np.sqrt(d2)
        self.pair_u, self.pair_v, self.pair_w = _pair_weights(grid, self.beta)
        sums = np.zeros(grid.n_patches)
        np.add.at(sums, self.pair_u, self.pair_w)
        np.add.at(sums, self.pair_v, self.pair_w)
        self.big_w = 1.0 + float(sums.max())
        self.csr = CsrGraph(grid.n_patches, self.pair_u, self.pair_v, self.pair_w, self.pair_w)

    def terminal_caps(self, seed_index: int) -> tuple[np.ndarray, np.ndarray] | None:
        """Per-node (source, target) capacities for a seed, or None when the
        anti-seed set is empty (degenerate all-ones classifier)."""
        anti = np.flatnonzero(self.gram[seed_index] < 0.0)
        if anti.size == 0:
            return None
        d_f = self.dist[:, seed_index]
        d_b = self.dist[:, anti].min(axis=1)
        delta = d_b - d_f
        source_caps = np.logaddexp(0.0, delta)
        target_caps = np.logaddexp(0.0, -delta)
        source_caps[seed_index] = self.big_w
        target_caps[seed_index] = 0.0
        source_caps[anti] = 0.0
        target_caps[anti] = self.big_w
        return source_caps, target_caps


def run_unit_voter(grid: FeatureGrid | VoterContext, seed_index: int) -> np.ndarray:
    """Binary mask of the region voted for by one seed's classifier.

    The seed patch is always inside the mask, anti-seeds never are. A seed
    with no anti-seeds (nothing in the grid opposes it) votes for everything.
    """
    ctx = grid if isinstance(grid, VoterContext) else VoterContext(grid)
    n = ctx.grid.n_patches
    if not 0 <= seed_index < n:
        raise ValueError("seed index out of range")
    shape = (ctx.grid.height, ctx.grid.width)
    caps = ctx.terminal_caps(seed_index)
    if caps is None:
        return np.ones(shape, dtype=np.uint8)
    _, side = ctx.csr.solve(ctx.csr.fill_caps(*caps))
    return side.reshape(shape).astype(np.uint8)


def seed_network(grid: FeatureGrid | VoterContext, seed_index: int) -> FlowNetwork:
    """The exact flow network run_unit_voter solves for this seed.

    Exposed for inspection and oracle testing; raises for degenerate seeds
    whose anti-seed set is empty.
    """
    ctx = grid if isinstance(grid, VoterContext) else VoterContext(grid)
    caps = ctx.terminal_caps(seed_index)
    if caps is None:
        raise ValueError("seed has an empty anti-seed set; no network is built")
    arcs = zip(ctx.pair_u.tolist(), ctx.pair_v.tolist(), ctx.pair_w.tolist(), ctx.pair_w.tolist())
    return FlowNetwork.build(ctx.grid.n_patches, arcs, caps[0], caps[1])
