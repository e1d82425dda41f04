"""Dataset I/O, resize/pad geometry and the augmentation pipeline.

Augmentations follow the training recipe: random horizontal/vertical flips,
random translations up to 20% of each side, rotation in [-90, 90] degrees
and a random resized crop with area scale in [0.8, 1.0], each applied with
probability 0.5 from one seeded stream. Every geometric transform is applied
identically to the image and all masks, using nearest-neighbor resampling
for both so pixel correspondence stays exact and masks stay binary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
import torchvision.transforms.functional as TF
from PIL import Image
from torchvision.transforms import InterpolationMode

from .errors import DatasetError, InputError
from .geometry import GeometryPreset, resolve_preset
from .structures import PadScaleRecord, Sample

NEAREST = InterpolationMode.NEAREST


@dataclass(frozen=True)
class AugmentationPolicy:
    p_flip_h: float = 0.5
    p_flip_v: float = 0.5
    p_translate: float = 0.5
    p_rotate: float = 0.5
    p_crop: float = 0.5
    translate_frac: float = 0.2
    rotate_range: tuple[float, float] = (-90.0, 90.0)
    crop_scale: tuple[float, float] = (0.8, 1.0)

    def __post_init__(self):
        for name in ("p_flip_h", "p_flip_v", "p_translate", "p_rotate", "p_crop"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise InputError(f"{name}={p} outside [0, 1]")

    @classmethod
    def disabled(cls) -> "AugmentationPolicy":
        return cls(p_flip_h=0, p_flip_v=0, p_translate=0, p_rotate=0, p_crop=0)


# ----------------------------------------------------------------- geometry
def resize_pad(sample: Sample, preset: str | GeometryPreset) -> Sample:
    """Scale the longer side to the preset input size, zero-pad bottom/right."""
    preset = resolve_preset(preset)
    h, w = sample.image.shape[-2:]
    if h == 0 or w == 0:
        raise InputError(f"zero-sized image {h}x{w}")
    canvas = preset.input_size
    scale = canvas / max(h, w)
    if h >= w:
        nh, nw = canvas, max(1, round(w * scale))
    else:
        nh, nw = max(1, round(h * scale)), canvas

    image = TF.resize(sample.image, [nh, nw], InterpolationMode.BILINEAR, antialias=True)
    masks = TF.resize(sample.masks, [nh, nw], NEAREST)
    image = F.pad(image, (0, canvas - nw, 0, canvas - nh))
    masks = F.pad(masks, (0, canvas - nw, 0, canvas - nh))
    record = PadScaleRecord(orig_h=h, orig_w=w, scale=scale,
                            content_h=nh, content_w=nw, canvas=canvas)
    out = Sample.create(image, masks, source_id=sample.source_id, record=record)
    return out


def mask_to_original(mask: torch.Tensor, record: PadScaleRecord) -> torch.Tensor:
    """Invert resize_pad for a (canvas, canvas) mask -> (orig_h, orig_w) uint8."""
    content = mask[: record.content_h, : record.content_w]
    return TF.resize(content[None].to(torch.uint8),
                     [record.orig_h, record.orig_w], NEAREST)[0]


# ------------------------------------------------------------- augmentation
def augment(sample: Sample, policy: AugmentationPolicy, rng_seed) -> Sample:
    """One random augmentation draw; identical geometry for image and masks.

    All gates and parameters are drawn in a fixed order even when a
    transform is skipped, so one seed always defines one transform.
    """
    rng = np.random.default_rng(rng_seed)
    h, w = sample.image.shape[-2:]

    gates = rng.random(5)
    tx = int(round((rng.random() * 2 - 1) * policy.translate_frac * w))
    ty = int(round((rng.random() * 2 - 1) * policy.translate_frac * h))
    angle = float(rng.uniform(*policy.rotate_range))
    area = h * w * float(rng.uniform(*policy.crop_scale))
    aspect = math.exp(float(rng.uniform(math.log(3 / 4), math.log(4 / 3))))
    ch = min(h, max(1, round(math.sqrt(area / aspect))))
    cw = min(w, max(1, round(math.sqrt(area * aspect))))
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))

    image, masks = sample.image, sample.masks
    applied = False

    def both(fn):
        nonlocal image, masks, applied
        image, masks = fn(image), fn(masks)
        applied = True

    if gates[0] < policy.p_flip_h:
        both(TF.hflip)
    if gates[1] < policy.p_flip_v:
        both(TF.vflip)
    if gates[2] < policy.p_translate and (tx or ty):
        both(lambda t: TF.affine(t, angle=0.0, translate=[tx, ty], scale=1.0,
                                 shear=[0.0, 0.0], interpolation=NEAREST, fill=0))
    if gates[3] < policy.p_rotate:
        both(lambda t: TF.rotate(t, angle, interpolation=NEAREST, fill=0))
    if gates[4] < policy.p_crop:
        both(lambda t: TF.resized_crop(t, top, left, ch, cw, [h, w], NEAREST))

    if not applied:
        return sample.clone()
    return Sample.create(image, masks, source_id=sample.source_id, record=sample.record)


def derive_seed(global_seed: int, step: int, slot: int) -> np.random.SeedSequence:
    """Deterministic per-draw seed; safe for parallel sample preparation."""
    return np.random.SeedSequence([int(global_seed), int(step), int(slot)])


# -------------------------------------------------------------- dataset I/O
def save_dataset(samples: list[Sample], out_dir: str | Path) -> None:
    """Write `images/*.png` + `masks/*.png` with matching stems.

    Mask pixel value v in {0..K} encodes class v (0 = background).
    """
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    for i, sample in enumerate(samples):
        stem = f"{i:05d}"
        img = (sample.image.clamp(0, 1) * 255).round().to(torch.uint8)
        Image.fromarray(img.permute(1, 2, 0).numpy(), mode="RGB").save(
            out_dir / "images" / f"{stem}.png")
        label = torch.zeros(sample.masks.shape[-2:], dtype=torch.uint8)
        for k in range(sample.masks.shape[0]):
            label[sample.masks[k] > 0] = k + 1
        Image.fromarray(label.numpy(), mode="L").save(out_dir / "masks" / f"{stem}.png")


def load_dataset(root: str | Path, num_classes: int | None = None) -> list[Sample]:
    """Read a dataset directory; errors enumerate every offending stem."""
    root = Path(root)
    images_dir, masks_dir = root / "images", root / "masks"
    if not images_dir.is_dir() or not masks_dir.is_dir():
        raise DatasetError(f"{root} must contain images/ and masks/ directories")
    image_stems = {p.stem for p in images_dir.glob("*.png")}
    mask_stems = {p.stem for p in masks_dir.glob("*.png")}
    missing_masks = sorted(image_stems - mask_stems)
    missing_images = sorted(mask_stems - image_stems)
    if missing_masks or missing_images:
        parts = []
        if missing_masks:
            parts.append("images without masks: " + ", ".join(missing_masks))
        if missing_images:
            parts.append("masks without images: " + ", ".join(missing_images))
        raise DatasetError("; ".join(parts))
    if not image_stems:
        raise DatasetError(f"no image/mask pairs found under {root}")

    stems = sorted(image_stems)
    labels = {}
    max_value = 0
    for stem in stems:
        arr = np.asarray(Image.open(masks_dir / f"{stem}.png").convert("L"))
        labels[stem] = arr
        max_value = max(max_value, int(arr.max()))
    if num_classes is None:
        num_classes = max(1, max_value)
    offenders = sorted(stem for stem, arr in labels.items() if int(arr.max()) > num_classes)
    if offenders:
        raise DatasetError(
            f"mask values exceed max class {num_classes} in: " + ", ".join(offenders)
        )

    samples = []
    for stem in stems:
        rgb = np.asarray(Image.open(images_dir / f"{stem}.png").convert("RGB"))
        image = torch.from_numpy(rgb.astype(np.float32) / 255.0).permute(2, 0, 1)
        label = labels[stem]
        masks = torch.from_numpy(
            np.stack([(label == k + 1) for k in range(num_classes)]).astype(np.uint8)
        )
        samples.append(Sample.create(image, masks, source_id=stem))
    return samples
