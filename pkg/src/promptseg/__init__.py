"""Prompt learning for promptable segmentation models.

A prompt predictor network turns image-encoder features into box, mask and
dense prompt embeddings for a queried class, trained end-to-end against a
frozen (or LoRA-adapted) promptable segmentation backbone. The model runs
autonomously, semi-autonomously with human-in-the-loop refinement, or fully
manually.
"""

from .backbone import SegmentationBackbone
from .geometry import PRESETS, GeometryPreset, resolve_preset
from .model import PromptSegmenter, build_model
from .ppn import PromptPredictor
from .structures import ManualPrompts, PromptBundle, Sample, SegmentationResult

__all__ = [
    "PRESETS",
    "GeometryPreset",
    "ManualPrompts",
    "PromptBundle",
    "PromptPredictor",
    "PromptSegmenter",
    "Sample",
    "SegmentationBackbone",
    "SegmentationResult",
    "build_model",
    "resolve_preset",
]

__version__ = "0.1.0"
