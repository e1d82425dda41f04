from .image_encoder import ImageEncoder
from .mask_decoder import MaskDecoder
from .model import SegmentationBackbone
from .prompt_encoder import PromptEncoder, RandomFourierPositionEncoding

__all__ = [
    "ImageEncoder",
    "MaskDecoder",
    "PromptEncoder",
    "RandomFourierPositionEncoding",
    "SegmentationBackbone",
]
