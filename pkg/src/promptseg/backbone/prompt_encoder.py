"""Prompt encoder: sparse tokens for points/boxes, dense embeddings for masks.

Points become one token each (random-Fourier positional encoding plus a
per-label learned embedding); boxes become two corner tokens; low-resolution
masks pass through a 4x downsampling convolution block. An empty prompt set
yields zero sparse tokens and a learned "no mask" dense embedding.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from ..errors import InputError
from ..geometry import GeometryPreset
from ..structures import ManualPrompts


class RandomFourierPositionEncoding(nn.Module):
    """SAM-style positional encoding from a fixed Gaussian frequency matrix."""

    def __init__(self, dim: int, scale: float = 1.0):
        super().__init__()
        if dim % 2 != 0:
            raise InputError(f"positional encoding dim must be even, got {dim}")
        self.register_buffer("freqs", scale * torch.randn(2, dim // 2))

    def forward(self, coords: torch.Tensor) -> torch.Tensor:
        """Normalized [0,1] coords (..., 2) -> encodings (..., dim)."""
        projected = (2.0 * coords - 1.0) @ self.freqs.to(coords.dtype)
        projected = 2.0 * np.pi * projected
        return torch.cat([torch.sin(projected), torch.cos(projected)], dim=-1)

    def grid(self, grid_side: int) -> torch.Tensor:
        """Dense encoding (dim, g, g) at patch centers."""
        device, dtype = self.freqs.device, self.freqs.dtype
        steps = (torch.arange(grid_side, device=device, dtype=dtype) + 0.5) / grid_side
        ys, xs = torch.meshgrid(steps, steps, indexing="ij")
        enc = self.forward(torch.stack([xs, ys], dim=-1))
        return enc.permute(2, 0, 1)


class PromptEncoder(nn.Module):
    TOP_LEFT, BOTTOM_RIGHT = 0, 1
    # Logit value assigned to binary brush pixels (fg = +, bg = -).
    BRUSH_LOGIT = 6.0
    # Dense channels 0..15 carry the pixel-unshuffled mask logits losslessly
    # through the 4x downsampling; the matching decoder upscaler unpacks
    # them, giving a frozen-from-scratch backbone a working dense-prompt
    # pathway (the role pretraining plays for the full-size models).
    NUM_CARRIER_CHANNELS = 16

    def __init__(self, preset: GeometryPreset):
        super().__init__()
        c = preset.embed_channels
        self.embed_dim = c
        self.grid_side = preset.embed_grid
        self.mask_prompt_size = preset.mask_prompt_size
        self.pe = RandomFourierPositionEncoding(c)
        self.point_embeddings = nn.Embedding(2, c)  # index = point label (bg=0, fg=1)
        self.corner_embeddings = nn.Embedding(2, c)
        self.no_mask_embed = nn.Embedding(1, c)
        self.mask_downscaler = nn.Conv2d(1, c, kernel_size=4, stride=4)
        self._init_carrier_channels()

    def _init_carrier_channels(self) -> None:
        with torch.no_grad():
            self.no_mask_embed.weight.zero_()
            self.mask_downscaler.bias.zero_()
            w = self.mask_downscaler.weight  # (C, 1, 4, 4)
            for k in range(self.NUM_CARRIER_CHANNELS):
                w[k].zero_()
                w[k, 0, k // 4, k % 4] = 1.0

    def dense_pe(self) -> torch.Tensor:
        return self.pe.grid(self.grid_side)

    def embed_points(self, coords: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        """coords (B, K, 2) normalized, labels (B, K) in {0,1} -> (B, K, C)."""
        return self.pe(coords) + self.point_embeddings(labels)

    def embed_boxes(self, boxes: torch.Tensor) -> torch.Tensor:
        """boxes (B, n, 4) xyxy normalized -> (B, 2n, C) corner tokens."""
        corners = boxes.reshape(*boxes.shape[:-1], 2, 2)  # (B, n, corner, xy)
        enc = self.pe(corners)
        enc = enc + self.corner_embeddings.weight.to(enc.dtype)
        return enc.flatten(-3, -2)

    def embed_mask_logits(self, mask: torch.Tensor) -> torch.Tensor:
        """(B, 1, S, S) mask logits/values -> (B, C, H', W') via 4x downsampling."""
        s = self.mask_prompt_size
        if mask.shape[-2:] != (s, s):
            raise InputError(
                f"mask prompt resolution {tuple(mask.shape[-2:])} != expected ({s}, {s})"
            )
        return self.mask_downscaler(mask)

    def no_mask_dense(self, batch: int = 1, dtype=None) -> torch.Tensor:
        w = self.no_mask_embed.weight
        if dtype is not None:
            w = w.to(dtype)
        g = self.grid_side
        return w.reshape(1, -1, 1, 1).expand(batch, -1, g, g)

    def forward(self, prompts: ManualPrompts) -> tuple[torch.Tensor, torch.Tensor]:
        """Encode one prompt set -> (sparse (K, C), dense (C, H', W'))."""
        prompts.validate(self.mask_prompt_size)
        dtype = self.point_embeddings.weight.dtype
        tokens = []
        if prompts.points:
            coords = torch.tensor([[p[0], p[1]] for p in prompts.points], dtype=dtype)
            labels = torch.tensor([p[2] for p in prompts.points], dtype=torch.long)
            tokens.append(self.embed_points(coords[None], labels[None])[0])
        if prompts.boxes:
            boxes = torch.tensor(prompts.boxes, dtype=dtype)
            tokens.append(self.embed_boxes(boxes[None])[0])
        if tokens:
            sparse = torch.cat(tokens, dim=0)
        else:
            sparse = torch.zeros(0, self.embed_dim, dtype=dtype)
        if prompts.brush_mask is not None:
            brush = prompts.brush_mask.to(dtype)
            logits = self.BRUSH_LOGIT * (2.0 * (brush > 0.5).to(dtype) - 1.0)
            dense = self.embed_mask_logits(logits[None, None])[0]
        else:
            dense = self.no_mask_dense(dtype=dtype)[0]
        return sparse, dense
