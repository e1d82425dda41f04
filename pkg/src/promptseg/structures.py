"""Domain data structures: prompts, predictions, samples and coordinate records."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import torch

from .errors import InputError

FOREGROUND = 1
BACKGROUND = 0


@dataclass(frozen=True)
class PadScaleRecord:
    """Forward/inverse mapping between an original image and model space.

    Model space is a square canvas of side `canvas`: the original image is
    scaled by `scale` (longer side -> canvas) and zero-padded on the
    bottom/right. All mappings are pure arithmetic, so inverting a point
    recovers it exactly.
    """

    orig_h: int
    orig_w: int
    scale: float
    content_h: int
    content_w: int
    canvas: int

    def to_model_xy(self, x: float, y: float) -> tuple[float, float]:
        """Original pixel coords -> normalized [0,1] model-space coords."""
        return x * self.scale / self.canvas, y * self.scale / self.canvas

    def to_original_xy(self, x: float, y: float) -> tuple[float, float]:
        """Normalized model-space coords -> original pixel coords."""
        return x * self.canvas / self.scale, y * self.canvas / self.scale

    def box_to_model(self, box: tuple[float, float, float, float]) -> tuple[float, float, float, float]:
        x1, y1 = self.to_model_xy(box[0], box[1])
        x2, y2 = self.to_model_xy(box[2], box[3])
        return x1, y1, x2, y2

    def box_to_original(self, box: tuple[float, float, float, float]) -> tuple[float, float, float, float]:
        x1, y1 = self.to_original_xy(box[0], box[1])
        x2, y2 = self.to_original_xy(box[2], box[3])
        return x1, y1, x2, y2


@dataclass
class ManualPrompts:
    """User-supplied prompts in normalized [0,1] model-space coordinates.

    points: (x, y, label) with label FOREGROUND/BACKGROUND
    boxes:  (x1, y1, x2, y2) with x1 < x2 and y1 < y2
    brush_mask: binary (S, S) tensor at the preset's mask_prompt_size
    """

    points: list[tuple[float, float, int]] = field(default_factory=list)
    boxes: list[tuple[float, float, float, float]] = field(default_factory=list)
    brush_mask: torch.Tensor | None = None

    def validate(self, mask_prompt_size: int | None = None) -> None:
        for x, y, label in self.points:
            if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                raise InputError(f"point ({x}, {y}) outside [0,1]")
            if label not in (FOREGROUND, BACKGROUND):
                raise InputError(f"point label {label} not in {{0, 1}}")
        for x1, y1, x2, y2 in self.boxes:
            if not (0.0 <= x1 < x2 <= 1.0 and 0.0 <= y1 < y2 <= 1.0):
                raise InputError(f"box ({x1}, {y1}, {x2}, {y2}) is not ordered inside [0,1]")
        if self.brush_mask is not None:
            if self.brush_mask.ndim != 2:
                raise InputError(f"brush mask must be 2-d, got shape {tuple(self.brush_mask.shape)}")
            if mask_prompt_size is not None and self.brush_mask.shape != (mask_prompt_size, mask_prompt_size):
                raise InputError(
                    f"brush mask resolution {tuple(self.brush_mask.shape)} != "
                    f"expected ({mask_prompt_size}, {mask_prompt_size})"
                )

    @property
    def is_empty(self) -> bool:
        return not self.points and not self.boxes and self.brush_mask is None

    @property
    def num_sparse_tokens(self) -> int:
        return len(self.points) + 2 * len(self.boxes)


@dataclass
class SegmentationResult:
    """Final prediction: mask logits at input resolution plus the objectness gate."""

    mask_logits: torch.Tensor  # (H, W) float
    mask: torch.Tensor  # (H, W) bool, sigmoid(logits) > 0.5
    objectness_logit: torch.Tensor  # scalar
    object_present: bool  # objectness_logit >= 0

    @classmethod
    def from_logits(cls, mask_logits: torch.Tensor, objectness_logit: torch.Tensor) -> "SegmentationResult":
        with torch.no_grad():
            mask = torch.sigmoid(mask_logits) > 0.5
        return cls(
            mask_logits=mask_logits,
            mask=mask,
            objectness_logit=objectness_logit,
            object_present=bool(objectness_logit.item() >= 0.0),
        )

    @property
    def gated_mask(self) -> torch.Tensor:
        """Mask with the objectness gate applied (empty when object absent)."""
        if self.object_present:
            return self.mask
        return torch.zeros_like(self.mask)


@dataclass
class PromptBundle:
    """Prompt predictor output for one queried class.

    Tensors may carry a leading batch dimension when produced by a batched
    forward pass; `select` extracts one sample.
    """

    box: torch.Tensor  # (4,) or (B, 4), normalized xyxy
    dense_prompt_tokens: torch.Tensor  # (N-2, C) or (B, N-2, C)
    mask_prompt: torch.Tensor  # (1, S, S) or (B, 1, S, S) logits
    objectness_logit: torch.Tensor  # () or (B,)

    @property
    def batched(self) -> bool:
        return self.box.ndim == 2

    def select(self, i: int) -> "PromptBundle":
        if not self.batched:
            raise InputError("select() on an unbatched bundle")
        return PromptBundle(
            box=self.box[i],
            dense_prompt_tokens=self.dense_prompt_tokens[i],
            mask_prompt=self.mask_prompt[i],
            objectness_logit=self.objectness_logit[i],
        )


@dataclass
class Sample:
    """One dataset element: image, per-class masks and provenance."""

    image: torch.Tensor  # (3, H, W) float32 in [0, 1]
    masks: torch.Tensor  # (K, H, W) uint8 in {0, 1}
    present: list[bool]
    source_id: str = ""
    record: PadScaleRecord | None = None

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise InputError(f"sample image must be (3, H, W), got {tuple(self.image.shape)}")
        if self.masks.ndim != 3 or self.masks.shape[-2:] != self.image.shape[-2:]:
            raise InputError(
                f"masks {tuple(self.masks.shape)} do not match image {tuple(self.image.shape)}"
            )

    @classmethod
    def create(cls, image: torch.Tensor, masks: torch.Tensor, source_id: str = "",
               record: PadScaleRecord | None = None) -> "Sample":
        present = [bool(m.any().item()) for m in masks]
        return cls(image=image, masks=masks, present=present, source_id=source_id, record=record)

    def refresh_present(self) -> None:
        self.present = [bool(m.any().item()) for m in self.masks]

    @property
    def num_classes(self) -> int:
        return self.masks.shape[0]

    def clone(self) -> "Sample":
        return replace(self, image=self.image.clone(), masks=self.masks.clone(),
                       present=list(self.present))


def tight_box(mask: torch.Tensor) -> tuple[float, float, float, float]:
    """Tight bounding box of a binary (H, W) mask, normalized to [0,1].

    Pixel (r, c) spans [c, c+1] x [r, r+1], so the box covers the outer
    edges of the foreground pixels.
    """
    if not mask.any():
        raise InputError("tight_box of an empty mask")
    h, w = mask.shape
    rows = torch.nonzero(mask.any(dim=1), as_tuple=False).flatten()
    cols = torch.nonzero(mask.any(dim=0), as_tuple=False).flatten()
    y1, y2 = rows[0].item(), rows[-1].item() + 1
    x1, x2 = cols[0].item(), cols[-1].item() + 1
    return x1 / w, y1 / h, x2 / w, y2 / h
