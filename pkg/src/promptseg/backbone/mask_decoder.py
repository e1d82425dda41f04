"""Mask decoder: two-way attention between prompt tokens and image embedding.

Mirrors the SAM decoder interface at toy scale: two output tokens
(objectness, mask) are prepended to whatever sparse prompt tokens arrive,
two two-way attention layers update tokens and image embedding jointly,
a 4x transposed-convolution head upscales the image embedding, and the
mask is read out as a dot product with the mask token's projection. The
objectness token feeds a 3-layer fully connected head producing a single
presence logit; a negative logit means the queried object is absent.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import InputError
from ..geometry import GeometryPreset
from ..nn_blocks import MLP, Attention, MLPBlock


class TwoWayAttentionLayer(nn.Module):
    """Token self-attention, token->image cross, token MLP, image->token cross."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: float = 2.0):
        super().__init__()
        self.self_attn = Attention(dim, num_heads)
        self.norm1 = nn.LayerNorm(dim)
        self.cross_token_to_image = Attention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = MLPBlock(dim, int(dim * mlp_ratio))
        self.norm3 = nn.LayerNorm(dim)
        self.cross_image_to_token = Attention(dim, num_heads)
        self.norm4 = nn.LayerNorm(dim)

    def forward(self, tokens: torch.Tensor, image: torch.Tensor,
                image_pe: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        tokens = self.norm1(tokens + self.self_attn(tokens, tokens, tokens))
        keys = image + image_pe
        tokens = self.norm2(tokens + self.cross_token_to_image(tokens, keys, image))
        tokens = self.norm3(tokens + self.mlp(tokens))
        queries = image + image_pe
        image = self.norm4(image + self.cross_image_to_token(queries, tokens, tokens))
        return tokens, image


class MaskDecoder(nn.Module):
    NUM_OUTPUT_TOKENS = 2  # objectness token, mask token
    # Layer-normalized streams bound the raw mask dot product to O(1); the
    # fixed gain restores a usable logit range so confident masks are
    # reachable even when every decoder weight stays frozen.
    LOGIT_GAIN = 4.0

    def __init__(self, preset: GeometryPreset, depth: int = 2, num_heads: int = 4):
        super().__init__()
        c = preset.embed_channels
        self.embed_dim = c
        self.grid_side = preset.embed_grid
        self.object_token = nn.Embedding(1, c)
        self.mask_token = nn.Embedding(1, c)
        self.layers = nn.ModuleList(
            TwoWayAttentionLayer(c, num_heads) for _ in range(depth)
        )
        self.final_token_to_image = Attention(c, num_heads)
        self.final_norm = nn.LayerNorm(c)
        self.upscaler = nn.ConvTranspose2d(c, c // 8, kernel_size=4, stride=4)
        self.mask_readout = MLP(c, c, c // 8, 3)
        self.objectness_head = MLP(c, c, 1, 3)
        self._init_carrier_unpack()

    def _init_carrier_unpack(self) -> None:
        # Mirror of the prompt encoder's carrier packing: upscaled channel 0
        # reproduces the dense pathway's pixel-unshuffled mask logits.
        with torch.no_grad():
            self.upscaler.bias.zero_()
            w = self.upscaler.weight  # (C_in, C_out, 4, 4)
            w[:, 0].zero_()
            for k in range(16):
                w[k, 0, k // 4, k % 4] = 1.0

    def forward(self, embedding: torch.Tensor, image_pe: torch.Tensor,
                sparse_tokens: torch.Tensor, dense_embedding: torch.Tensor,
                object_token: torch.Tensor | None = None,
                objectness_head: nn.Module | None = None
                ) -> tuple[torch.Tensor, torch.Tensor]:
        """Decode masks for a batch.

        embedding: (B, C, g, g); image_pe: (C, g, g); sparse_tokens: (B, K, C)
        with K >= 0; dense_embedding: (B, C, g, g).
        The dedicated objectness output token and its fully connected head
        default to the decoder's own; callers owning trained replacements
        (the prompt predictor's objectness pathway) may supply them.
        Returns (mask_logits (B, 4g, 4g), objectness_logit (B,)).
        """
        b, c, g, _ = embedding.shape
        if sparse_tokens.ndim != 3 or sparse_tokens.shape[-1] != self.embed_dim:
            raise InputError(
                f"sparse tokens must be (B, K, {self.embed_dim}), got "
                f"{tuple(sparse_tokens.shape)}"
            )
        if dense_embedding.shape != embedding.shape:
            raise InputError(
                f"dense embedding {tuple(dense_embedding.shape)} != image embedding "
                f"{tuple(embedding.shape)}"
            )
        if object_token is None:
            object_token = self.object_token.weight
        if objectness_head is None:
            objectness_head = self.objectness_head
        output_tokens = torch.cat(
            [object_token, self.mask_token.weight], dim=0
        ).to(embedding.dtype)
        tokens = torch.cat(
            [output_tokens.unsqueeze(0).expand(b, -1, -1), sparse_tokens], dim=1
        )

        src0 = embedding + dense_embedding
        src = src0.flatten(2).transpose(1, 2)  # (B, L, C)
        # Bound per-token scale entering attention: large dense-prompt
        # magnitudes would saturate the softmax and kill token gradients.
        rms = src.pow(2).mean(-1, keepdim=True).sqrt()
        src = src / rms.clamp(min=1.0)
        pe = image_pe.to(embedding.dtype).flatten(1).transpose(0, 1).unsqueeze(0)

        for layer in self.layers:
            tokens, src = layer(tokens, src, pe)
        tokens = self.final_norm(
            tokens + self.final_token_to_image(tokens, src + pe, src)
        )

        objectness_logit = objectness_head(tokens[:, 0, :]).squeeze(-1)
        mask_vec = self.mask_readout(tokens[:, 1, :])  # (B, C//8)
        # Fixed unit weight on channel 0 keeps the carrier relay live at init.
        mask_vec = mask_vec + F.one_hot(
            torch.zeros(1, dtype=torch.long), mask_vec.shape[-1]
        ).to(mask_vec.dtype)

        # Residual around the attention stack: the layer-normalized token
        # stream would otherwise wash out the dense prompt's magnitude.
        grid = src.transpose(1, 2).reshape(b, c, g, g) + src0
        upscaled = self.upscaler(grid)  # (B, C//8, 4g, 4g)
        mask_logits = self.LOGIT_GAIN * torch.einsum("bc,bchw->bhw", mask_vec, upscaled)
        return mask_logits, objectness_logit
