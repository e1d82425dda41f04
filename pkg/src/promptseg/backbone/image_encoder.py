"""Toy ViT image encoder: 16x16 patch embed + 2 transformer layers.

Small enough to run on a single CPU core while producing embeddings with
the exact geometry of the published models (C x H' x W').
"""

from __future__ import annotations

import torch
from torch import nn

from ..geometry import GeometryPreset, PATCH_SIZE
from ..nn_blocks import Attention, MLPBlock, sincos_position_grid


class EncoderLayer(nn.Module):
    def __init__(self, dim: int, num_heads: int, mlp_ratio: float = 4.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = MLPBlock(dim, int(dim * mlp_ratio))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        x = x + self.attn(h, h, h)
        x = x + self.mlp(self.norm2(x))
        return x


class ImageEncoder(nn.Module):
    def __init__(self, preset: GeometryPreset, depth: int = 2, num_heads: int = 4):
        super().__init__()
        c, g = preset.embed_channels, preset.embed_grid
        self.grid = g
        self.patch_embed = nn.Conv2d(3, c, kernel_size=PATCH_SIZE, stride=PATCH_SIZE)
        self.register_buffer("pos_grid", sincos_position_grid(c, g, g))
        self.layers = nn.ModuleList(EncoderLayer(c, num_heads) for _ in range(depth))
        self.norm = nn.LayerNorm(c)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """(B, 3, H, W) -> (B, C, H', W')."""
        x = self.patch_embed(images)  # (B, C, g, g)
        x = x + self.pos_grid
        b, c, g, _ = x.shape
        x = x.flatten(2).transpose(1, 2)  # (B, g*g, C)
        for layer in self.layers:
            x = layer(x)
        x = self.norm(x)
        return x.transpose(1, 2).reshape(b, c, g, g)
