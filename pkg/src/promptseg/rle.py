"""Run-length encoding for binary masks (JSON-friendly wire format).

Counts are run lengths of alternating 0s and 1s over the row-major
flattened mask, always starting with a (possibly zero-length) run of 0s:

    {"size": [height, width], "counts": [n0, n1, n0, ...]}
"""

from __future__ import annotations

import numpy as np
import torch

from .errors import InputError


def rle_encode(mask: torch.Tensor | np.ndarray) -> dict:
    if isinstance(mask, torch.Tensor):
        mask = mask.detach().cpu().numpy()
    if mask.ndim != 2:
        raise InputError(f"RLE expects a 2-d mask, got shape {mask.shape}")
    flat = np.asarray(mask, dtype=bool).reshape(-1)
    if flat.size == 0:
        return {"size": list(mask.shape), "counts": []}
    changes = np.nonzero(np.diff(flat))[0] + 1
    boundaries = np.concatenate([[0], changes, [flat.size]])
    counts = np.diff(boundaries).tolist()
    if flat[0]:
        counts = [0] + counts
    return {"size": list(mask.shape), "counts": counts}


def rle_decode(rle: dict) -> torch.Tensor:
    try:
        h, w = rle["size"]
        counts = rle["counts"]
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"malformed RLE object: {e}") from e
    total = sum(counts)
    if total != h * w:
        raise InputError(f"RLE counts sum to {total}, expected {h * w}")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for run in counts:
        if run < 0:
            raise InputError("RLE counts must be non-negative")
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    return torch.from_numpy(flat.reshape(h, w))
