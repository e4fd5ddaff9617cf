"""Per-patch logistic head distilled from foreground-union masks.

The head is a D-dim weight vector plus bias applied to every patch feature
through a sigmoid, the feature-level equivalent of a 1x1 convolution over a
frozen backbone. Training follows a self-reinforcing label rule: while the
head's hard prediction disagrees with the union mask (IoU below 0.5) the
union mask is the label, afterwards the head's own prediction is. For the
first 100 iterations an extra cross-entropy term against the union mask keeps
the early signal anchored.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Callable, Sequence

import numpy as np

from fgunion.tensor_io import FeatureGrid, FormatError, as_mask

_HEAD_MAGIC = b"UCWT"
_HEAD_VERSION = 1
_LOG_CLAMP = 1e-7


@dataclass(frozen=True)
class LogisticHead:
    weights: np.ndarray  # (D,) float64
    bias: float

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a 1-D vector")
        if not (np.all(np.isfinite(w)) and np.isfinite(self.bias)):
            raise ValueError("head parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def dim(self) -> int:
        return self.weights.size

    @classmethod
    def zeros(cls, dim: int) -> "LogisticHead":
        return cls(np.zeros(dim), 0.0)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 50
    lr0: float = 0.05
    decay: float = 0.95
    decay_every: int = 50
    total_iterations: int = 600
    warmup_dual_loss_iters: int = 100
    weight_decay: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 3407


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def predict(head: LogisticHead, grid: FeatureGrid) -> tuple[np.ndarray, np.ndarray]:
    """Per-patch scores and the thresholded mask (strictly above 0.5)."""
    if head.dim != grid.dim:
        raise ValueError(f"head dimension {head.dim} does not match feature dimension {grid.dim}")
    z = grid.flat().astype(np.float64) @ head.weights + head.bias
    soft = _sigmoid(z).reshape(grid.height, grid.width).astype(np.float32)
    hard = (soft > 0.5).astype(np.uint8)
    return soft, hard


def _iou(x: np.ndarray, y: np.ndarray) -> float:
    union = int(np.logical_or(x, y).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(x, y).sum()) / union


def select_label(u_seg_hard, u_cut) -> np.ndarray:
    """Training label: the union mask until the prediction agrees with it."""
    pred = as_mask(u_seg_hard)
    cut = as_mask(u_cut)
    if pred.shape != cut.shape:
        raise ValueError("mask dimensions differ")
    return cut if _iou(pred, cut) < 0.5 else pred


def _cross_entropy_terms(s: np.ndarray, target: np.ndarray) -> float:
    log_s = np.log(np.clip(s, _LOG_CLAMP, 1.0 - _LOG_CLAMP))
    log_1ms = np.log(np.clip(1.0 - s, _LOG_CLAMP, 1.0 - _LOG_CLAMP))
    return float(-np.mean(target * log_s + (1.0 - target) * log_1ms))


def loss_and_gradient(head: LogisticHead, grid: FeatureGrid, u_cut,
                      iteration: int, dual_until: int = 100) -> tuple[float, np.ndarray]:
    """Cross-entropy against the selected label, plus the early extra term.

    The label is chosen from the current (pre-update) hard prediction. The
    gradient is the exact analytic derivative with the label held fixed; the
    log clamp only guards the reported loss value against saturated scores.
    Returns (loss, gradient over weights then bias).
    """
    cut = as_mask(u_cut)
    if cut.shape != (grid.height, grid.width):
        raise ValueError("union mask dimensions do not match the grid")
    if head.dim != grid.dim:
        raise ValueError(f"head dimension {head.dim} does not match feature dimension {grid.dim}")
    feats = grid.flat().astype(np.float64)
    # full-precision scores: predict's float32 rounding is a serialization
    # detail and would put quantization noise into the loss surface
    s = _sigmoid(feats @ head.weights + head.bias)
    hard = (s > 0.5).astype(np.uint8).reshape(cut.shape)
    label = select_label(hard, cut)
    t = label.ravel().astype(np.float64)
    u = cut.ravel().astype(np.float64)
    dual = iteration < dual_until
    loss = _cross_entropy_terms(s, t)
    residual = s - t
    if dual:
        loss += _cross_entropy_terms(s, u)
        residual = residual + (s - u)
    residual /= s.size
    grad = np.empty(head.dim + 1)
    grad[:-1] = feats.T @ residual
    grad[-1] = residual.sum()
    return loss, grad


class AdamW:
    """Decoupled weight decay with bias-corrected first/second moments."""

    def __init__(self, dim: int, betas=(0.9, 0.999), eps=1e-8, weight_decay=1e-4):
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = np.zeros(dim)
        self.v = np.zeros(dim)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1.0 - self.b1) * grad
        self.v = self.b2 * self.v + (1.0 - self.b2) * grad * grad
        m_hat = self.m / (1.0 - self.b1 ** self.t)
        v_hat = self.v / (1.0 - self.b2 ** self.t)
        return params - lr * (m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * params)


def train(samples: Sequence[tuple[FeatureGrid, np.ndarray]], cfg: TrainConfig = TrainConfig(),
          on_iteration: Callable[[int, float, float], None] | None = None) -> LogisticHead:
    """Train a head on (feature grid, union mask) pairs.

    Mini-batches are drawn by reshuffling the sample order every epoch with a
    generator seeded from cfg.seed; per-image gradients are averaged in batch
    order, so results are bit-reproducible for a fixed seed.
    """
    if not samples:
        raise ValueError("no training samples")
    dims = {g.dim for g, _ in samples}
    if len(dims) != 1:
        raise ValueError("all feature grids must share one feature dimension")
    dim = dims.pop()
    pairs = [(g, as_mask(m)) for g, m in samples]
    for g, m in pairs:
        if m.shape != (g.height, g.width):
            raise ValueError("union mask dimensions do not match the grid")

    rng = np.random.default_rng(cfg.seed)
    params = np.zeros(dim + 1)
    optimizer = AdamW(dim + 1, betas=cfg.betas, eps=cfg.eps, weight_decay=cfg.weight_decay)
    order: list[int] = []
    for it in range(cfg.total_iterations):
        while len(order) < cfg.batch_size:
            shuffled = np.arange(len(pairs))
            rng.shuffle(shuffled)
            order.extend(shuffled.tolist())
        batch = order[: cfg.batch_size]
        del order[: cfg.batch_size]
        head = LogisticHead(params[:-1].copy(), float(params[-1]))
        losses = np.empty(len(batch))
        grads = np.empty((len(batch), dim + 1))
        for row, idx in enumerate(batch):
            grid, cut = pairs[idx]
            losses[row], grads[row] = loss_and_gradient(head, grid, cut, it, cfg.warmup_dual_loss_iters)
        loss = float(losses.mean())
        grad = grads.mean(axis=0)
        lr = cfg.lr0 * (cfg.decay ** (it // cfg.decay_every))
        params = optimizer.step(params, grad, lr)
        if on_iteration is not None:
            on_iteration(it, loss, lr)
    return LogisticHead(params[:-1].copy(), float(params[-1]))


def write_head(head: LogisticHead, dest: str | Path | BinaryIO) -> None:
    payload = np.empty(head.dim + 1, dtype="<f4")
    payload[:-1] = head.weights.astype(np.float32)
    payload[-1] = np.float32(head.bias)
    blob = _HEAD_MAGIC + struct.pack("<2I", _HEAD_VERSION, head.dim) + payload.tobytes()
    if hasattr(dest, "write"):
        dest.write(blob)
    else:
        Path(dest).write_bytes(blob)


def read_head(source: str | Path | BinaryIO) -> LogisticHead:
    raw = source.read() if hasattr(source, "read") else Path(source).read_bytes()
    if len(raw) < 12:
        raise FormatError(f"truncated head file: {len(raw)} bytes")
    if raw[:4] != _HEAD_MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {_HEAD_MAGIC!r}")
    version, dim = struct.unpack_from("<2I", raw, 4)
    if version != _HEAD_VERSION:
        raise FormatError(f"unsupported head version {version}")
    if dim < 1:
        raise FormatError("non-positive head dimension")
    expected = 12 + 4 * (dim + 1)
    if len(raw) < expected:
        raise FormatError(f"truncated head payload: {len(raw)} of {expected} bytes")
    if len(raw) > expected:
        raise FormatError(f"trailing data after head payload: {len(raw) - expected} bytes")
    vals = np.frombuffer(raw, dtype="<f4", offset=12).astype(np.float64)
    return LogisticHead(vals[:-1], float(vals[-1]))
