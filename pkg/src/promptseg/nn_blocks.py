"""Shared transformer building blocks: attention, MLPs, norms, positional grids."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from .errors import InputError


class Attention(nn.Module):
    """Multi-head attention with separate q/k/v projections.

    Projections are individual Linears so that adapters can wrap the query
    and value paths independently.
    """

    def __init__(self, dim: int, num_heads: int = 4):
        super().__init__()
        if dim % num_heads != 0:
            raise InputError(f"dim {dim} not divisible by num_heads {num_heads}")
        self.dim = dim
        self.num_heads = num_heads
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)

    def _split_heads(self, x: torch.Tensor) -> torch.Tensor:
        b, n, _ = x.shape
        return x.reshape(b, n, self.num_heads, -1).transpose(1, 2)

    def forward(self, q: torch.Tensor, k: torch.Tensor, v: torch.Tensor,
                return_weights: bool = False):
        if q.shape[-1] != self.dim or k.shape[-1] != self.dim:
            raise InputError(
                f"attention expects dim {self.dim}, got q {q.shape[-1]} / k {k.shape[-1]}"
            )
        qh = self._split_heads(self.q_proj(q))
        kh = self._split_heads(self.k_proj(k))
        vh = self._split_heads(self.v_proj(v))
        if return_weights:
            scale = 1.0 / math.sqrt(qh.shape[-1])
            weights = torch.softmax(qh @ kh.transpose(-2, -1) * scale, dim=-1)
            out = weights @ vh
        else:
            weights = None
            out = F.scaled_dot_product_attention(qh, kh, vh)
        out = out.transpose(1, 2).reshape(q.shape[0], q.shape[1], self.dim)
        out = self.out_proj(out)
        if return_weights:
            return out, weights
        return out


class MLPBlock(nn.Module):
    """Two-layer feed-forward block with GELU."""

    def __init__(self, dim: int, hidden_dim: int):
        super().__init__()
        self.lin1 = nn.Linear(dim, hidden_dim)
        self.lin2 = nn.Linear(hidden_dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.lin2(F.gelu(self.lin1(x)))


class MLP(nn.Module):
    """Stack of Linear+ReLU layers; the final layer is linear."""

    def __init__(self, in_dim: int, hidden_dim: int, out_dim: int, num_layers: int):
        super().__init__()
        dims = [in_dim] + [hidden_dim] * (num_layers - 1) + [out_dim]
        self.layers = nn.ModuleList(
            nn.Linear(dims[i], dims[i + 1]) for i in range(num_layers)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = F.relu(x)
        return x


class LayerNorm2d(nn.Module):
    """Channel-wise LayerNorm over (B, C, H, W)."""

    def __init__(self, num_channels: int, eps: float = 1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(num_channels))
        self.bias = nn.Parameter(torch.zeros(num_channels))
        self.eps = eps

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        mean = x.mean(1, keepdim=True)
        var = (x - mean).pow(2).mean(1, keepdim=True)
        x = (x - mean) / torch.sqrt(var + self.eps)
        return x * self.weight[:, None, None] + self.bias[:, None, None]


def sincos_position_grid(channels: int, grid_h: int, grid_w: int,
                         temperature: float = 10000.0) -> torch.Tensor:
    """Fixed 2-d sine/cosine positional encoding of shape (channels, H, W).

    Half the channels encode the column index, half the row index; depends
    only on grid position, never on input content.
    """
    if channels % 4 != 0:
        raise InputError(f"sincos grid needs channels divisible by 4, got {channels}")
    quarter = channels // 4
    omega = 1.0 / temperature ** (torch.arange(quarter, dtype=torch.float64) / quarter)
    ys = torch.arange(grid_h, dtype=torch.float64)
    xs = torch.arange(grid_w, dtype=torch.float64)
    out_x = torch.einsum("w,q->wq", xs, omega)  # (W, quarter)
    out_y = torch.einsum("h,q->hq", ys, omega)  # (H, quarter)
    pe = torch.cat(
        [
            torch.sin(out_x)[None, :, :].expand(grid_h, -1, -1),
            torch.cos(out_x)[None, :, :].expand(grid_h, -1, -1),
            torch.sin(out_y)[:, None, :].expand(-1, grid_w, -1),
            torch.cos(out_y)[:, None, :].expand(-1, grid_w, -1),
        ],
        dim=-1,
    )  # (H, W, channels)
    return pe.permute(2, 0, 1).to(torch.float32).contiguous()
