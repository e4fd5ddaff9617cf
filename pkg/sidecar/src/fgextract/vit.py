"""Minimal vision transformer for Key-feature export.

Parameter naming matches the reference self-supervised ViT checkpoints
(patch_embed.proj.*, cls_token, pos_embed, blocks.N.{norm1,attn.qkv,attn.proj,
norm2,mlp.fc1,mlp.fc2}.*, norm.*), so published weight files load directly.
Only inference paths are implemented.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn

ARCHS = {
    "vits8": dict(patch=8, dim=384, depth=12, heads=6),
    "vits16": dict(patch=16, dim=384, depth=12, heads=6),
    "vitb8": dict(patch=8, dim=768, depth=12, heads=12),
    "vitb16": dict(patch=16, dim=768, depth=12, heads=12),
}

CANONICAL_IMG_SIZE = 224


class Attention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.num_heads = heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3, bias=True)
        self.proj = nn.Linear(dim, dim)

    def _qkv(self, x: torch.Tensor) -> torch.Tensor:
        b, n, c = x.shape
        return self.qkv(x).reshape(b, n, 3, self.num_heads, c // self.num_heads)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, c = x.shape
        qkv = self._qkv(x).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q @ k.transpose(-2, -1)) * self.scale
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, c)
        return self.proj(out)

    def keys(self, x: torch.Tensor) -> torch.Tensor:
        """Per-token Key vectors, heads re-concatenated in input order."""
        b, n, c = x.shape
        return self._qkv(x)[:, :, 1].reshape(b, n, c)


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))


class Block(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, dim * 4)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class PatchEmbed(nn.Module):
    def __init__(self, patch: int, dim: int):
        super().__init__()
        self.proj = nn.Conv2d(3, dim, kernel_size=patch, stride=patch)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.proj(x)


class VisionTransformer(nn.Module):
    def __init__(self, patch: int = 8, dim: int = 384, depth: int = 12, heads: int = 6):
        super().__init__()
        self.patch_size = patch
        self.embed_dim = dim
        self.patch_embed = PatchEmbed(patch, dim)
        n = (CANONICAL_IMG_SIZE // patch) ** 2
        self.cls_token = nn.Parameter(torch.zeros(1, 1, dim))
        self.pos_embed = nn.Parameter(torch.zeros(1, n + 1, dim))
        self.blocks = nn.ModuleList(Block(dim, heads) for _ in range(depth))
        self.norm = nn.LayerNorm(dim)
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        nn.init.trunc_normal_(self.cls_token, std=0.02)

    def _positions(self, n_patches: int, grid: tuple[int, int]) -> torch.Tensor:
        table = self.pos_embed.shape[1] - 1
        if n_patches == table:
            return self.pos_embed
        # resample the patch position table for non-canonical input sizes
        side = int(math.sqrt(table))
        patch_pos = self.pos_embed[:, 1:].reshape(1, side, side, -1).permute(0, 3, 1, 2)
        patch_pos = nn.functional.interpolate(patch_pos, size=grid, mode="bicubic",
                                              align_corners=False)
        patch_pos = patch_pos.permute(0, 2, 3, 1).reshape(1, n_patches, -1)
        return torch.cat([self.pos_embed[:, :1], patch_pos], dim=1)

    @torch.no_grad()
    def last_layer_keys(self, x: torch.Tensor) -> tuple[torch.Tensor, tuple[int, int]]:
        """Key vectors of the final attention layer, class token dropped.

        Returns (B, grid_h*grid_w, dim) features and the patch grid shape.
        """
        feat = self.patch_embed(x)
        grid = (int(feat.shape[2]), int(feat.shape[3]))
        tok = feat.flatten(2).transpose(1, 2)
        cls = self.cls_token.expand(tok.shape[0], -1, -1)
        tok = torch.cat([cls, tok], dim=1)
        tok = tok + self._positions(grid[0] * grid[1], grid)
        for blk in self.blocks[:-1]:
            tok = blk(tok)
        last = self.blocks[-1]
        keys = last.attn.keys(last.norm1(tok))
        return keys[:, 1:], grid


def _unwrap_state_dict(state: dict) -> dict:
    for key in ("teacher", "student", "model", "state_dict"):
        if key in state and isinstance(state[key], dict):
            state = state[key]
            break
    out = {}
    for name, value in state.items():
        for prefix in ("module.", "backbone."):
            if name.startswith(prefix):
                name = name[len(prefix):]
        if name.startswith("head."):
            continue
        out[name] = value
    return out


def build_model(arch: str, weights=None, seed: int = 0) -> VisionTransformer:
    """Construct the tagged architecture, loading weights when given.

    Without a weights file the parameters come from a seeded random
    initialization; downstream features are structurally valid but carry no
    semantics, which is enough for format and pipeline checks.
    """
    if arch not in ARCHS:
        raise ValueError(f"unknown architecture {arch!r}, expected one of {sorted(ARCHS)}")
    torch.manual_seed(seed)
    model = VisionTransformer(**ARCHS[arch])
    if weights is not None:
        try:
            state = torch.load(weights, map_location="cpu", weights_only=True)
            model.load_state_dict(_unwrap_state_dict(state))
        except RuntimeError as exc:
            raise ValueError(f"weights file {weights} does not fit architecture {arch!r}: {exc}") from exc
    model.eval()
    return model
