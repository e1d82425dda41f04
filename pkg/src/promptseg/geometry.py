"""Geometry presets tying together input, embedding and mask-prompt sizes.

A preset fixes every spatial dimension the model touches: the square input
side, the embedding grid produced by the 16x16 patch embed, and the
low-resolution mask prompt (4x the embedding grid). "paper" matches the
published SAM shapes; "desk" halves channels and quarters the grid so the
full pipeline trains on a laptop CPU.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigurationError

PATCH_SIZE = 16


@dataclass(frozen=True)
class GeometryPreset:
    name: str
    input_size: int
    embed_channels: int
    embed_grid: int
    mask_prompt_size: int

    def __post_init__(self):
        if self.input_size != PATCH_SIZE * self.embed_grid:
            raise ConfigurationError(
                f"preset '{self.name}': input_size {self.input_size} != "
                f"{PATCH_SIZE} * embed_grid {self.embed_grid}"
            )
        if self.mask_prompt_size != 4 * self.embed_grid:
            raise ConfigurationError(
                f"preset '{self.name}': mask_prompt_size {self.mask_prompt_size} != "
                f"4 * embed_grid {self.embed_grid}"
            )

    @property
    def token_dim(self) -> int:
        return self.embed_channels

    @property
    def num_image_tokens(self) -> int:
        return self.embed_grid * self.embed_grid


PRESETS = {
    "paper": GeometryPreset("paper", 1024, 256, 64, 256),
    "desk": GeometryPreset("desk", 256, 128, 16, 64),
}


def resolve_preset(preset: str | GeometryPreset) -> GeometryPreset:
    if isinstance(preset, GeometryPreset):
        return preset
    try:
        return PRESETS[preset]
    except KeyError:
        raise ConfigurationError(
            f"unknown geometry preset {preset!r}; available: {sorted(PRESETS)}"
        ) from None
