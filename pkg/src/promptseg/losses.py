"""Training losses: focal mask loss, L1 + GIoU box loss, BCE objectness.

The focal loss follows the training formula as published: the alpha weight
multiplies the background term only, which differs from the standard
alpha-balanced focal loss (where alpha weights the foreground and 1-alpha
the background). total_loss composes the weighted sum

    total = l1w * (mask_prompt_focal + final_mask_focal)
          + l2w * (box_l1 + box_giou)
          + l3w * objectness_bce

with the mask/box terms zeroed when the queried object is absent.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import InputError

PROB_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 10.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    gamma: float = 3.0
    alpha: float = 0.7


@dataclass
class LossReport:
    """Per-step loss breakdown. Fields are scalar tensors while a graph is
    attached; `detached()` converts to plain floats for logging."""

    total: torch.Tensor
    mask_prompt_focal: torch.Tensor
    final_mask_focal: torch.Tensor
    box_l1: torch.Tensor
    box_giou: torch.Tensor
    objectness_bce: torch.Tensor

    FIELDS = ("total", "mask_prompt_focal", "final_mask_focal", "box_l1", "box_giou", "objectness_bce")

    def detached(self) -> dict[str, float]:
        return {name: float(getattr(self, name).detach()) for name in self.FIELDS}


def focal_loss(pred_prob: torch.Tensor, target: torch.Tensor, gamma: float, alpha: float) -> torch.Tensor:
    """Mean over elements of  -y (1-p)^g log p  -  a (1-y) p^g log(1-p).

    pred_prob are probabilities (post-sigmoid), clamped to [eps, 1-eps]
    before the logs.
    """
    if pred_prob.shape != target.shape:
        raise InputError(
            f"focal_loss shape mismatch: pred {tuple(pred_prob.shape)} vs target {tuple(target.shape)}"
        )
    p = pred_prob.clamp(PROB_EPS, 1.0 - PROB_EPS)
    y = target.to(p.dtype)
    fg = -y * (1.0 - p).pow(gamma) * torch.log(p)
    bg = -alpha * (1.0 - y) * p.pow(gamma) * torch.log1p(-p)
    return (fg + bg).mean()


def _validate_box(box: torch.Tensor, name: str) -> None:
    if box.shape != (4,):
        raise InputError(f"{name} must have 4 coords, got shape {tuple(box.shape)}")
    x1, y1, x2, y2 = box.unbind(-1)
    if not (x1 < x2 and y1 < y2):
        raise InputError(
            f"{name} is degenerate: ({float(x1):.6g}, {float(y1):.6g}, "
            f"{float(x2):.6g}, {float(y2):.6g})"
        )


def _as_box(box, name: str) -> torch.Tensor:
    if not torch.is_tensor(box):
        box = torch.as_tensor(box, dtype=torch.float64)
    _validate_box(box, name)
    return box


def giou(box_a: torch.Tensor, box_b: torch.Tensor) -> torch.Tensor:
    """Generalized IoU of two xyxy boxes: IoU - (enclosing - union) / enclosing."""
    box_a = _as_box(box_a, "box_a")
    box_b = _as_box(box_b, "box_b")

    ax1, ay1, ax2, ay2 = box_a.unbind(-1)
    bx1, by1, bx2, by2 = box_b.unbind(-1)
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)

    iw = (torch.minimum(ax2, bx2) - torch.maximum(ax1, bx1)).clamp(min=0)
    ih = (torch.minimum(ay2, by2) - torch.maximum(ay1, by1)).clamp(min=0)
    inter = iw * ih
    union = area_a + area_b - inter

    ew = torch.maximum(ax2, bx2) - torch.minimum(ax1, bx1)
    eh = torch.maximum(ay2, by2) - torch.minimum(ay1, by1)
    enclosing = ew * eh

    return inter / union - (enclosing - union) / enclosing


def giou_loss(box_a: torch.Tensor, box_b: torch.Tensor) -> torch.Tensor:
    return 1.0 - giou(box_a, box_b)


def box_loss(pred_box: torch.Tensor, gt_box: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """(mean absolute coordinate error, GIoU loss); combined 1:1 downstream."""
    pred_box = _as_box(pred_box, "pred_box")
    gt_box = _as_box(gt_box, "gt_box")
    l1 = (pred_box - gt_box.to(pred_box.dtype)).abs().mean()
    return l1, giou_loss(pred_box, gt_box)


def objectness_loss(logit: torch.Tensor, present: bool) -> torch.Tensor:
    """Numerically stable binary cross-entropy on a presence logit."""
    logit = logit if torch.is_tensor(logit) else torch.as_tensor(float(logit))
    target = torch.as_tensor(1.0 if present else 0.0, dtype=logit.dtype)
    return F.binary_cross_entropy_with_logits(logit, target)


def downsample_mask(mask: torch.Tensor, size: int) -> torch.Tensor:
    """Nearest-neighbor downsample of a (H, W) mask to (size, size)."""
    return F.interpolate(
        mask[None, None].float(), size=(size, size), mode="nearest"
    )[0, 0]


def total_loss(bundle, result, gt_mask: torch.Tensor, gt_box, gt_present: bool,
               weights: LossWeights = LossWeights()) -> LossReport:
    """Compose the full training loss for one sample.

    bundle: PromptBundle (mask_prompt logits (1,S,S), box (4,), objectness_logit)
    result: SegmentationResult-like (mask_logits (H,W), objectness_logit)
    gt_mask: (H, W) binary at input resolution; a nearest-neighbor copy at
        the mask-prompt resolution is derived internally.
    gt_present=False zeroes the mask and box terms; only objectness remains.

    Both presence logits (the predictor's own and the decoder head's) are
    supervised; objectness_bce is their sum.
    """
    if result.mask_logits.shape != gt_mask.shape:
        raise InputError(
            f"gt_mask {tuple(gt_mask.shape)} does not match mask logits "
            f"{tuple(result.mask_logits.shape)}"
        )
    g, a = weights.gamma, weights.alpha
    dtype = result.mask_logits.dtype
    zero = torch.zeros((), dtype=dtype)

    if gt_present:
        s = bundle.mask_prompt.shape[-1]
        gt_small = downsample_mask(gt_mask, s).to(dtype)
        mask_prompt_focal = focal_loss(torch.sigmoid(bundle.mask_prompt[0]), gt_small, g, a)
        final_mask_focal = focal_loss(torch.sigmoid(result.mask_logits), gt_mask.to(dtype), g, a)
        gt_box_t = gt_box if torch.is_tensor(gt_box) else torch.as_tensor(gt_box, dtype=dtype)
        l1, gl = box_loss(bundle.box, gt_box_t)
    else:
        mask_prompt_focal = final_mask_focal = l1 = gl = zero

    bce = objectness_loss(bundle.objectness_logit, gt_present) + \
        objectness_loss(result.objectness_logit, gt_present)

    total = (
        weights.lambda1 * (mask_prompt_focal + final_mask_focal)
        + weights.lambda2 * (l1 + gl)
        + weights.lambda3 * bce
    )
    return LossReport(
        total=total,
        mask_prompt_focal=mask_prompt_focal,
        final_mask_focal=final_mask_focal,
        box_l1=l1,
        box_giou=gl,
        objectness_bce=bce,
    )
