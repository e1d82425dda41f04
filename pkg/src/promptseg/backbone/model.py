"""Backbone facade over image encoder, prompt encoder and mask decoder.

Implements the promptable-segmentation interface the predictor network
builds on: encode an image once, encode any mix of manual prompts, decode a
mask from an embedding plus tokens. Weights are immutable during inference;
training requires exclusive access.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import ConfigurationError, InputError
from ..geometry import GeometryPreset, resolve_preset
from ..structures import ManualPrompts, SegmentationResult
from .image_encoder import ImageEncoder
from .mask_decoder import MaskDecoder
from .prompt_encoder import PromptEncoder


class SegmentationBackbone(nn.Module):
    def __init__(self, preset: str | GeometryPreset = "desk"):
        super().__init__()
        self.preset = resolve_preset(preset)
        self.image_encoder = ImageEncoder(self.preset)
        self.prompt_encoder = PromptEncoder(self.preset)
        self.mask_decoder = MaskDecoder(self.preset)

    # ---------------------------------------------------------------- images
    def encode_image(self, image: torch.Tensor) -> torch.Tensor:
        """(3, H, W) or (B, 3, H, W) in [0,1] -> embedding (C, g, g) / (B, C, g, g)."""
        squeeze = image.ndim == 3
        if squeeze:
            image = image.unsqueeze(0)
        s = self.preset.input_size
        if image.ndim != 4 or image.shape[1] != 3 or image.shape[-2:] != (s, s):
            raise ConfigurationError(
                f"encode_image expects (B, 3, {s}, {s}) for preset "
                f"'{self.preset.name}', got {tuple(image.shape)}"
            )
        emb = self.image_encoder(image)
        return emb[0] if squeeze else emb

    # --------------------------------------------------------------- prompts
    def encode_manual_prompts(self, prompts: ManualPrompts) -> tuple[torch.Tensor, torch.Tensor]:
        """-> (sparse tokens (K, C), dense embedding (C, g, g))."""
        return self.prompt_encoder(prompts)

    # ---------------------------------------------------------------- decode
    def decode(self, embedding: torch.Tensor, sparse_tokens: torch.Tensor,
               dense_embedding: torch.Tensor, object_token: torch.Tensor | None = None,
               objectness_head: torch.nn.Module | None = None
               ) -> tuple[torch.Tensor, torch.Tensor]:
        """Batched decode -> (mask logits (B, H, W) at input size, objectness (B,))."""
        c, g, s = self.preset.embed_channels, self.preset.embed_grid, self.preset.input_size
        if embedding.shape[-3:] != (c, g, g):
            raise InputError(
                f"embedding shape {tuple(embedding.shape)} != (..., {c}, {g}, {g})"
            )
        low_res, objectness = self.mask_decoder(
            embedding, self.prompt_encoder.dense_pe(), sparse_tokens, dense_embedding,
            object_token=object_token, objectness_head=objectness_head,
        )
        mask_logits = F.interpolate(
            low_res.unsqueeze(1), size=(s, s), mode="bilinear", align_corners=False
        ).squeeze(1)
        return mask_logits, objectness

    def decode_mask(self, embedding: torch.Tensor, sparse_tokens: torch.Tensor,
                    dense_embedding: torch.Tensor) -> SegmentationResult:
        """Single-image decode with the objectness gate evaluated."""
        if embedding.ndim != 3:
            raise InputError(f"decode_mask expects an unbatched (C, g, g) embedding, "
                             f"got {tuple(embedding.shape)}")
        if sparse_tokens.ndim != 2:
            raise InputError(f"decode_mask expects (K, C) sparse tokens, got "
                             f"{tuple(sparse_tokens.shape)}")
        mask_logits, objectness = self.decode(
            embedding.unsqueeze(0), sparse_tokens.unsqueeze(0), dense_embedding.unsqueeze(0)
        )
        return SegmentationResult.from_logits(mask_logits[0], objectness[0])

    def segment_manual(self, image: torch.Tensor, prompts: ManualPrompts) -> SegmentationResult:
        """Fully manual mode: encode image and prompts, decode."""
        embedding = self.encode_image(image)
        sparse, dense = self.encode_manual_prompts(prompts)
        return self.decode_mask(embedding, sparse, dense)
