"""Freeze-policy management and low-rank adaptation of the mask decoder.

The image encoder and prompt encoder stay frozen under every mode:

    ppn_only              train the prompt predictor (token bank + heads) only
    ppn_plus_lora_decoder additionally adapt the decoder attention query and
                          value projections with low-rank residual paths
    full_decoder          all mask decoder parameters train

LoRA adds W + (alpha / rank) * B @ A to a frozen projection, with A drawn
from a small normal and B zero-initialized, so a freshly adapted model is
bitwise identical to the unadapted one until the first optimizer step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigurationError
from .model import PromptSegmenter
from .nn_blocks import Attention

FREEZE_MODES = ("ppn_only", "ppn_plus_lora_decoder", "full_decoder")


@dataclass(frozen=True)
class FreezePolicy:
    mode: str = "ppn_only"
    lora_rank: int = 4
    lora_alpha: float = 8.0

    def __post_init__(self):
        if self.mode not in FREEZE_MODES:
            raise ConfigurationError(
                f"unknown freeze mode {self.mode!r}; expected one of {FREEZE_MODES}"
            )


@dataclass
class ParamCensus:
    """Exact parameter counts after a policy has been applied."""

    trainable: int
    frozen: int
    groups: dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.trainable + self.frozen


class LoRALinear(nn.Module):
    """Frozen linear layer with a trainable low-rank residual path."""

    def __init__(self, base: nn.Linear, rank: int, alpha: float):
        super().__init__()
        self.base = base
        self.base.weight.requires_grad_(False)
        if self.base.bias is not None:
            self.base.bias.requires_grad_(False)
        self.rank = rank
        self.scaling = alpha / rank
        dtype = base.weight.dtype
        self.lora_a = nn.Parameter(
            torch.randn(rank, base.in_features, dtype=dtype) / math.sqrt(base.in_features)
        )
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank, dtype=dtype))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.base(x)
        delta = F.linear(F.linear(x, self.lora_a), self.lora_b)
        return out + self.scaling * delta


def inject_lora(module: nn.Module, rank: int, alpha: float) -> int:
    """Wrap the q/v projections of every Attention block under `module`.

    Returns the number of adapted projections. Idempotent wrapping is not
    supported; injecting twice raises.
    """
    count = 0
    for sub in module.modules():
        if isinstance(sub, Attention):
            for name in ("q_proj", "v_proj"):
                layer = getattr(sub, name)
                if isinstance(layer, LoRALinear):
                    raise ConfigurationError("LoRA already injected into this module")
                setattr(sub, name, LoRALinear(layer, rank, alpha))
                count += 1
    return count


def strip_lora(module: nn.Module) -> int:
    """Remove LoRA wrappers, restoring the original projections (adapters discarded)."""
    count = 0
    for sub in module.modules():
        if isinstance(sub, Attention):
            for name in ("q_proj", "v_proj"):
                layer = getattr(sub, name)
                if isinstance(layer, LoRALinear):
                    setattr(sub, name, layer.base)
                    count += 1
    return count


def parameter_census(model: nn.Module) -> ParamCensus:
    trainable = frozen = 0
    groups: dict[str, int] = {}
    for name, p in model.named_parameters():
        group = name.split(".")[0]
        if p.requires_grad:
            trainable += p.numel()
            groups[group] = groups.get(group, 0) + p.numel()
        else:
            frozen += p.numel()
    return ParamCensus(trainable=trainable, frozen=frozen, groups=groups)


def apply_policy(model: PromptSegmenter, policy: FreezePolicy) -> ParamCensus:
    """Freeze/unfreeze in place per the policy; returns the parameter census."""
    if policy.mode not in FREEZE_MODES:
        raise ConfigurationError(f"unknown freeze mode {policy.mode!r}")
    for p in model.parameters():
        p.requires_grad_(False)
    for p in model.ppn.parameters():
        p.requires_grad_(True)
    if policy.mode == "ppn_plus_lora_decoder":
        inject_lora(model.backbone.mask_decoder, policy.lora_rank, policy.lora_alpha)
        for name, p in model.backbone.mask_decoder.named_parameters():
            if "lora_a" in name or "lora_b" in name:
                p.requires_grad_(True)
    elif policy.mode == "full_decoder":
        for p in model.backbone.mask_decoder.parameters():
            p.requires_grad_(True)
    return parameter_census(model)


def optimizer_param_groups(model: PromptSegmenter, lr_ppn: float, lr_decoder: float
                           ) -> list[dict]:
    """Two disjoint parameter groups: predictor at lr_ppn, decoder at lr_decoder."""
    ppn_params = [p for p in model.ppn.parameters() if p.requires_grad]
    decoder_params = [p for p in model.backbone.parameters() if p.requires_grad]
    groups = []
    if ppn_params:
        groups.append({"params": ppn_params, "lr": lr_ppn, "name": "ppn"})
    if decoder_params:
        groups.append({"params": decoder_params, "lr": lr_decoder, "name": "decoder"})
    return groups


def snapshot_frozen(model: nn.Module) -> dict[str, torch.Tensor]:
    """Clone every frozen parameter for a later bitwise integrity check."""
    return {
        name: p.detach().clone()
        for name, p in model.named_parameters()
        if not p.requires_grad
    }


def frozen_integrity_check(model: nn.Module, snapshot: dict[str, torch.Tensor]) -> bool:
    """True iff every snapshotted tensor is bitwise identical in the model."""
    params = dict(model.named_parameters())
    for name, saved in snapshot.items():
        current = params.get(name)
        if current is None:
            return False
        if not torch.equal(current.detach(), saved):
            return False
    return True
