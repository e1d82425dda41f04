"""Synthetic ultrasound-like dataset generator.

Each image is a dark speckled field; when the queried object is present, a
bright curved band (a quadratic arc with finite thickness, echoing a bone
surface) is drawn with an acoustic shadow darkening the region below it.
The ground-truth mask is exactly the band. A configurable fraction of
images contains no object at all so the presence head has negatives to
learn from. Everything is a pure function of the seed.
"""

from __future__ import annotations

import numpy as np
import torch
from scipy.ndimage import gaussian_filter

from .errors import InputError
from .structures import Sample


def _render(rng: np.random.Generator, h: int, w: int, present: list[bool]
            ) -> tuple[torch.Tensor, torch.Tensor]:
    base = rng.uniform(0.05, 0.12)
    img = np.full((h, w), base, dtype=np.float64)
    texture = rng.standard_normal((h, w))
    img += 0.035 * gaussian_filter(texture, sigma=6.0)

    k_total = len(present)
    masks = np.zeros((k_total, h, w), dtype=np.uint8)
    xs = np.arange(w, dtype=np.float64)
    rows = np.arange(h, dtype=np.float64)[:, None]

    for k, is_present in enumerate(present):
        # Draw the arc parameters unconditionally so the rng stream does not
        # depend on the presence pattern.
        xc = rng.uniform(0.3, 0.7) * w
        lane = (k + 0.5) / k_total  # stack multi-class bands vertically
        y0 = (0.3 + 0.4 * lane + rng.uniform(-0.08, 0.08)) * h
        slope = rng.uniform(-0.2, 0.2)
        peak = rng.uniform(-0.15, 0.15) * h
        half_span = 0.5 * w
        curv = peak / half_span**2
        thickness = rng.uniform(0.05, 0.12) * h
        x_lo = rng.uniform(0.05, 0.15) * w
        x_hi = rng.uniform(0.85, 0.95) * w
        brightness = rng.uniform(0.55, 0.9)
        shadow_gain = rng.uniform(0.35, 0.6)
        if not is_present:
            continue

        centers = y0 + slope * (xs - xc) + curv * (xs - xc) ** 2
        centers = np.clip(centers, 0.12 * h, 0.88 * h)
        in_span = (xs >= x_lo) & (xs <= x_hi)
        dist = np.abs(rows - centers[None, :])
        band = (dist <= thickness / 2) & in_span[None, :]
        profile = np.exp(-((dist / (thickness / 1.4)) ** 2))
        img = np.where(band, brightness * (0.75 + 0.5 * profile), img)

        shadow = (rows > centers[None, :] + thickness / 2) & in_span[None, :]
        img = np.where(shadow, img * shadow_gain, img)
        masks[k] = band.astype(np.uint8)

    speckle = rng.gamma(shape=4.0, scale=0.25, size=(h, w))
    img = np.clip(img * speckle, 0.0, 1.0).astype(np.float32)
    image = torch.from_numpy(np.repeat(img[None], 3, axis=0).copy())
    return image, torch.from_numpy(masks)


def synth_generate(seed: int, count: int, empty_fraction: float = 0.2,
                   num_classes: int = 1,
                   size_range: tuple[int, int] = (224, 320)) -> list[Sample]:
    """Deterministically generate `count` samples; round(count * empty_fraction)
    of them contain no object."""
    if count < 1:
        raise InputError(f"count must be >= 1, got {count}")
    if not 0.0 <= empty_fraction <= 1.0:
        raise InputError(f"empty_fraction {empty_fraction} outside [0, 1]")
    rng = np.random.default_rng(seed)
    n_empty = int(round(count * empty_fraction))
    empty_idx = set(rng.choice(count, size=n_empty, replace=False).tolist())
    samples = []
    for i in range(count):
        h = int(rng.integers(size_range[0], size_range[1] + 1))
        w = int(rng.integers(size_range[0], size_range[1] + 1))
        present = [i not in empty_idx] * num_classes
        image, masks = _render(rng, h, w, present)
        samples.append(Sample.create(image, masks, source_id=f"synth-{seed}-{i:05d}"))
    return samples
