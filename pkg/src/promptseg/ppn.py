"""Prompt predictor network.

Per-class learnable tokens cross-attend with the positional-encoded image
embedding through a single two-way attention block. The first two updated
tokens regress a bounding box, the remaining N-2 become dense prompt tokens,
the updated image tokens are upsampled into a low-resolution mask prompt,
and a pooled readout of the updated tokens produces the predictor's own
presence logit.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .errors import InputError
from .geometry import GeometryPreset, resolve_preset
from .nn_blocks import MLP, Attention, MLPBlock, sincos_position_grid
from .structures import PromptBundle

MIN_BOX_SIDE = 1e-4
NUM_BOX_TOKENS = 2


class TwoWayBlock(nn.Module):
    """One two-way attention exchange between learnable tokens and image tokens.

    Pass 1: tokens query the image (keys/values are image tokens).
    Pass 2: image tokens query the updated tokens.
    Each attention and each 2-layer MLP is wrapped with a residual
    connection followed by layer normalization.
    """

    def __init__(self, dim: int, num_heads: int = 4, mlp_ratio: float = 2.0):
        super().__init__()
        self.token_to_image = Attention(dim, num_heads)
        self.norm1 = nn.LayerNorm(dim)
        self.token_mlp = MLPBlock(dim, int(dim * mlp_ratio))
        self.norm2 = nn.LayerNorm(dim)
        self.image_to_token = Attention(dim, num_heads)
        self.norm3 = nn.LayerNorm(dim)
        self.image_mlp = MLPBlock(dim, int(dim * mlp_ratio))
        self.norm4 = nn.LayerNorm(dim)

    def forward(self, tokens: torch.Tensor, image_tokens: torch.Tensor
                ) -> tuple[torch.Tensor, torch.Tensor]:
        tokens = self.norm1(tokens + self.token_to_image(tokens, image_tokens, image_tokens))
        tokens = self.norm2(tokens + self.token_mlp(tokens))
        image_tokens = self.norm3(image_tokens + self.image_to_token(image_tokens, tokens, tokens))
        image_tokens = self.norm4(image_tokens + self.image_mlp(image_tokens))
        return tokens, image_tokens


class PromptPredictor(nn.Module):
    def __init__(self, preset: str | GeometryPreset = "desk", num_classes: int = 1,
                 tokens_per_class: int = 8, num_heads: int = 4):
        super().__init__()
        if tokens_per_class < 3:
            raise InputError(
                f"tokens_per_class must be >= 3 (2 box tokens + >=1 dense prompt token), "
                f"got {tokens_per_class}"
            )
        self.preset = resolve_preset(preset)
        c, g = self.preset.embed_channels, self.preset.embed_grid
        self.num_classes = num_classes
        self.tokens_per_class = tokens_per_class
        # Unit-scale tokens keep the cross-attention logits away from the
        # flat-softmax regime where selectivity cannot emerge.
        self.class_tokens = nn.Parameter(torch.randn(num_classes, tokens_per_class, c))
        self.register_buffer("pos_grid", sincos_position_grid(c, g, g))
        self.two_way = TwoWayBlock(c, num_heads)
        self.box_head = MLP(NUM_BOX_TOKENS * c, c, 4, 3)
        self.mask_head = nn.Sequential(
            nn.ConvTranspose2d(c, c // 4, kernel_size=2, stride=2),
            nn.GELU(),
            nn.ConvTranspose2d(c // 4, c // 8, kernel_size=2, stride=2),
            nn.GELU(),
            nn.Conv2d(c // 8, 1, kernel_size=1),
        )
        # Presence readout sees both streams: pooled class tokens carry the
        # query, mean- and max-pooled image tokens carry the content.
        self.objectness_head = MLP(3 * c, c, 1, 2)
        # The objectness pathway through the decoder: a dedicated output
        # token and its 3-layer readout, supplied to decode calls in the
        # learned-prompt modes so presence stays trainable while the
        # decoder itself is frozen.
        self.decoder_object_token = nn.Parameter(torch.randn(1, c))
        self.decoder_objectness_head = MLP(c, c, 1, 3)

    # ------------------------------------------------------------ components
    def add_positional_encoding(self, embedding: torch.Tensor) -> torch.Tensor:
        """Add the fixed sinusoidal grid; output = input + P(row, col)."""
        c, g = self.preset.embed_channels, self.preset.embed_grid
        if embedding.shape[-3:] != (c, g, g):
            raise InputError(
                f"embedding shape {tuple(embedding.shape)} != (..., {c}, {g}, {g})"
            )
        return embedding + self.pos_grid.to(embedding.dtype)

    def two_way_attention(self, tokens: torch.Tensor, image_tokens: torch.Tensor
                          ) -> tuple[torch.Tensor, torch.Tensor]:
        """(N, C), (L, C) -> updated (N, C), (L, C); batched variants pass through."""
        squeeze = tokens.ndim == 2
        if squeeze:
            tokens, image_tokens = tokens.unsqueeze(0), image_tokens.unsqueeze(0)
        if tokens.shape[-1] != image_tokens.shape[-1]:
            raise InputError(
                f"token dim {tokens.shape[-1]} != image token dim {image_tokens.shape[-1]}"
            )
        tokens, image_tokens = self.two_way(tokens, image_tokens)
        if squeeze:
            return tokens[0], image_tokens[0]
        return tokens, image_tokens

    def predict_box(self, box_tokens: torch.Tensor) -> torch.Tensor:
        """2 updated tokens -> (x1, y1, x2, y2) guaranteed ordered inside [0,1].

        The head emits (cx, cy, w, h) through sigmoids, converted to corner
        form and clamped; a minimum side of MIN_BOX_SIDE keeps the box
        non-degenerate for the GIoU loss even as w, h -> 0.
        """
        if box_tokens.shape[-2] != NUM_BOX_TOKENS:
            raise InputError(f"box head expects exactly {NUM_BOX_TOKENS} tokens, "
                             f"got {box_tokens.shape[-2]}")
        raw = self.box_head(box_tokens.flatten(-2))
        cx, cy, w, h = torch.sigmoid(raw).unbind(-1)
        x1 = (cx - w / 2).clamp(0.0, 1.0)
        y1 = (cy - h / 2).clamp(0.0, 1.0)
        x2 = (cx + w / 2).clamp(0.0, 1.0)
        y2 = (cy + h / 2).clamp(0.0, 1.0)
        x2 = torch.maximum(x2, x1 + MIN_BOX_SIDE)
        y2 = torch.maximum(y2, y1 + MIN_BOX_SIDE)
        # keep the minimum side inside [0, 1] when x1/y1 sit at the boundary
        shift_x = (x2 - 1.0).clamp(min=0)
        shift_y = (y2 - 1.0).clamp(min=0)
        return torch.stack([x1 - shift_x, y1 - shift_y, x2 - shift_x, y2 - shift_y], dim=-1)

    def predict_mask_prompt(self, image_tokens: torch.Tensor) -> torch.Tensor:
        """Updated image tokens (..., L, C) -> mask prompt logits (..., 1, 4g, 4g)."""
        c, g = self.preset.embed_channels, self.preset.embed_grid
        squeeze = image_tokens.ndim == 2
        if squeeze:
            image_tokens = image_tokens.unsqueeze(0)
        if image_tokens.shape[-2:] != (g * g, c):
            raise InputError(
                f"image tokens shape {tuple(image_tokens.shape)} != (..., {g * g}, {c})"
            )
        grid = image_tokens.transpose(-1, -2).reshape(-1, c, g, g)
        out = self.mask_head(grid)
        return out[0] if squeeze else out

    # ------------------------------------------------------------- main path
    def forward(self, embedding: torch.Tensor, class_id: int) -> PromptBundle:
        """Batched prompt prediction: (B, C, g, g) -> batched PromptBundle."""
        if not (0 <= class_id < self.num_classes):
            raise InputError(f"class_id {class_id} out of range [0, {self.num_classes})")
        b = embedding.shape[0]
        encoded = self.add_positional_encoding(embedding)
        image_tokens = encoded.flatten(2).transpose(1, 2)  # (B, L, C)
        tokens = self.class_tokens[class_id].unsqueeze(0).expand(b, -1, -1).to(embedding.dtype)
        tokens, image_tokens = self.two_way_attention(tokens, image_tokens)

        box = self.predict_box(tokens[:, :NUM_BOX_TOKENS, :])
        dense_prompt_tokens = tokens[:, NUM_BOX_TOKENS:, :]
        mask_prompt = self.predict_mask_prompt(image_tokens)
        pooled = torch.cat(
            [tokens.mean(dim=1), image_tokens.mean(dim=1), image_tokens.max(dim=1).values],
            dim=-1,
        )
        objectness_logit = self.objectness_head(pooled).squeeze(-1)
        return PromptBundle(
            box=box,
            dense_prompt_tokens=dense_prompt_tokens,
            mask_prompt=mask_prompt,
            objectness_logit=objectness_logit,
        )

    def predict_prompts(self, embedding: torch.Tensor, class_id: int) -> PromptBundle:
        """Single-image prompt prediction: (C, g, g) -> unbatched PromptBundle."""
        if embedding.ndim != 3:
            raise InputError(
                f"predict_prompts expects an unbatched (C, g, g) embedding, got "
                f"{tuple(embedding.shape)}"
            )
        return self.forward(embedding.unsqueeze(0), class_id).select(0)
