"""Dice/IoU metrics, the prompt-mode evaluation harness and the
cosine-similarity prompting baseline.

Prompt modes:
    gt_box           manual mode prompted with the tight box of the gt mask
    learned          autonomous mode (learned prompts only, objectness-gated)
    learned_plus_box semi-autonomous: learned prompts + the gt box
    cosine_baseline  manual mode prompted by reference-image patch similarity

Images whose ground truth is empty are scored through the objectness
decision: a correct rejection counts as (1, 1), a false acceptance as (0, 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .errors import InputError
from .structures import FOREGROUND, ManualPrompts, Sample, tight_box

PROMPT_MODES = ("gt_box", "learned", "learned_plus_box", "cosine_baseline")


def dice_iou(pred: torch.Tensor, gt: torch.Tensor) -> tuple[float, float]:
    """(dice, iou) of two binary masks; both empty -> (1, 1), one empty -> (0, 0)."""
    if pred.shape != gt.shape:
        raise InputError(
            f"mask shapes differ: pred {tuple(pred.shape)} vs gt {tuple(gt.shape)}"
        )
    pred = pred.bool()
    gt = gt.bool()
    pred_n = int(pred.sum())
    gt_n = int(gt.sum())
    if pred_n == 0 and gt_n == 0:
        return 1.0, 1.0
    if pred_n == 0 or gt_n == 0:
        return 0.0, 0.0
    inter = int((pred & gt).sum())
    union = pred_n + gt_n - inter
    return 2.0 * inter / (pred_n + gt_n), inter / union


@dataclass
class MetricRow:
    model_tag: str
    dataset_tag: str
    prompt_mode: str
    dice: float
    iou: float
    n_images: int
    per_image: list[tuple[float, float]] = field(default_factory=list, repr=False)


def cosine_baseline_prompts(reference: Sample, test_embedding: torch.Tensor, *,
                            backbone, class_id: int = 0) -> ManualPrompts:
    """Patch-similarity prompting: the reference's mask-pooled foreground
    embedding is cosine-compared against every test patch; the top patch
    center becomes a foreground point and the extent of all patches scoring
    >= 0.8 * max becomes a box prompt. Ties break to the lowest flat index."""
    mask = reference.masks[class_id]
    if not mask.any():
        raise InputError("cosine baseline needs a reference with a non-empty mask")
    with torch.no_grad():
        ref_embedding = backbone.encode_image(reference.image.to(test_embedding.dtype))
    g = ref_embedding.shape[-1]
    patch_fg = F.adaptive_max_pool2d(mask[None].float(), (g, g))[0] > 0
    fg_vec = ref_embedding[:, patch_fg].mean(dim=1)

    flat = test_embedding.reshape(test_embedding.shape[0], -1)  # (C, L)
    sims = F.cosine_similarity(flat, fg_vec[:, None], dim=0)  # (L,)
    sims_np = sims.detach().cpu().numpy()
    top = int(np.argmax(sims_np))
    row, col = divmod(top, g)
    point = ((col + 0.5) / g, (row + 0.5) / g, FOREGROUND)

    best = float(sims_np.max())
    # 0.8 * max only makes sense as a threshold for positive similarity
    tau = 0.8 * best if best > 0 else best
    selected = sims_np >= tau
    rows, cols = np.divmod(np.nonzero(selected)[0], g)
    box = (cols.min() / g, rows.min() / g, (cols.max() + 1) / g, (rows.max() + 1) / g)
    return ManualPrompts(points=[point], boxes=[box])


def _predict(model, sample: Sample, prompt_mode: str, class_id: int,
             reference: Sample | None):
    gt = sample.masks[class_id]
    present = bool(gt.any())
    if prompt_mode == "learned":
        return model.segment_with_learned_prompts(sample.image, class_id), "gated"
    if prompt_mode == "learned_plus_box":
        manual = ManualPrompts(boxes=[tight_box(gt)]) if present else None
        return model.segment_with_learned_prompts(sample.image, class_id, manual), "gated"
    if prompt_mode == "gt_box":
        prompts = ManualPrompts(boxes=[tight_box(gt)]) if present else ManualPrompts()
        return model.segment_with_manual_prompts(sample.image, prompts), "manual"
    if prompt_mode == "cosine_baseline":
        if reference is None:
            raise InputError("cosine_baseline mode needs a reference sample")
        backbone = model.backbone
        with torch.no_grad():
            embedding = backbone.encode_image(sample.image)
        prompts = cosine_baseline_prompts(reference, embedding, backbone=backbone,
                                          class_id=class_id)
        return model.segment_with_manual_prompts(sample.image, prompts), "manual"
    raise InputError(f"unknown prompt mode {prompt_mode!r}; expected one of {PROMPT_MODES}")


def evaluate(model, samples: list[Sample], prompt_mode: str, class_id: int = 0,
             reference: Sample | None = None, model_tag: str = "model",
             dataset_tag: str = "dataset") -> MetricRow:
    """Score every sample; per-image (dice, iou) are averaged into the row.

    The objectness gate suppresses the mask in the learned modes; in the
    manual modes the prediction is taken as-is, but empty-gt images are
    still scored by the presence decision in every mode.
    """
    if prompt_mode not in PROMPT_MODES:
        raise InputError(f"unknown prompt mode {prompt_mode!r}; expected one of {PROMPT_MODES}")
    per_image = []
    with torch.no_grad():
        for sample in samples:
            gt = sample.masks[class_id].bool()
            result, gating = _predict(model, sample, prompt_mode, class_id, reference)
            if not gt.any():
                scores = (1.0, 1.0) if not result.object_present else (0.0, 0.0)
            else:
                pred = result.gated_mask if gating == "gated" else result.mask
                scores = dice_iou(pred, gt)
            per_image.append(scores)
    dice = float(np.mean([d for d, _ in per_image]))
    iou = float(np.mean([i for _, i in per_image]))
    return MetricRow(model_tag=model_tag, dataset_tag=dataset_tag,
                     prompt_mode=prompt_mode, dice=dice, iou=iou,
                     n_images=len(samples), per_image=per_image)


# ------------------------------------------------------------------ reports
def format_dice_iou(dice: float, iou: float) -> str:
    """Percent Dice/IoU pair in the usual table style, e.g. '78.2/65.2'."""
    return f"{100 * dice:.1f}/{100 * iou:.1f}"


def format_table(rows: list[MetricRow], delimiter: str = "\t") -> str:
    """Delimiter-separated metrics table with a header line."""
    header = delimiter.join(["model", "dataset", "prompt_mode", "dice_iou", "n_images"])
    lines = [header]
    for row in rows:
        lines.append(delimiter.join([
            row.model_tag, row.dataset_tag, row.prompt_mode,
            format_dice_iou(row.dice, row.iou), str(row.n_images),
        ]))
    return "\n".join(lines) + "\n"
