"""Combined model: backbone plus prompt predictor, with the three operating modes.

Learned prompts are aligned with the manual prompt space: the predicted box
is re-encoded through the backbone prompt encoder (so learned and manual
boxes share one representation), the N-2 dense prompt tokens enter the
decoder directly as sparse tokens, and the predicted mask prompt feeds the
dense-embedding pathway through the prompt encoder's 4x downsampling block.
Manual prompts, when given, are concatenated after the learned tokens; a
manual brush mask overrides the learned mask prompt.
"""

from __future__ import annotations

import torch
from torch import nn

from .backbone import SegmentationBackbone
from .geometry import GeometryPreset, resolve_preset
from .ppn import PromptPredictor
from .structures import ManualPrompts, PromptBundle, SegmentationResult


class PromptSegmenter(nn.Module):
    def __init__(self, preset: str | GeometryPreset = "desk", num_classes: int = 1,
                 tokens_per_class: int = 8):
        super().__init__()
        self.preset = resolve_preset(preset)
        self.backbone = SegmentationBackbone(self.preset)
        self.ppn = PromptPredictor(self.preset, num_classes=num_classes,
                                   tokens_per_class=tokens_per_class)

    @property
    def num_classes(self) -> int:
        return self.ppn.num_classes

    # ---------------------------------------------------------- prompt fusion
    def assemble_learned_prompts(self, bundle: PromptBundle,
                                 manual: ManualPrompts | None = None
                                 ) -> tuple[torch.Tensor, torch.Tensor]:
        """Batched bundle (+ optional manual prompts) -> decoder inputs.

        Returns (sparse tokens (B, K, C), dense embedding (B, C, g, g)).
        """
        enc = self.backbone.prompt_encoder
        box_tokens = enc.embed_boxes(bundle.box.unsqueeze(1))  # (B, 2, C)
        sparse = torch.cat([box_tokens, bundle.dense_prompt_tokens], dim=1)
        dense = enc.embed_mask_logits(bundle.mask_prompt)

        if manual is not None and not manual.is_empty:
            manual_sparse, manual_dense = enc(manual)
            b = sparse.shape[0]
            if manual_sparse.shape[0] > 0:
                sparse = torch.cat(
                    [sparse, manual_sparse.unsqueeze(0).expand(b, -1, -1)], dim=1
                )
            if manual.brush_mask is not None:
                dense = manual_dense.unsqueeze(0).expand_as(dense)
        return sparse, dense

    # -------------------------------------------------------------- inference
    def segment_with_learned_prompts(self, image: torch.Tensor, class_id: int,
                                     manual: ManualPrompts | None = None
                                     ) -> SegmentationResult:
        """Autonomous (manual=None) or semi-autonomous segmentation of one image."""
        embedding = self.backbone.encode_image(image)
        bundle = self.ppn.forward(embedding.unsqueeze(0), class_id)
        sparse, dense = self.assemble_learned_prompts(bundle, manual)
        mask_logits, objectness = self.backbone.decode(
            embedding.unsqueeze(0), sparse, dense,
            object_token=self.ppn.decoder_object_token,
            objectness_head=self.ppn.decoder_objectness_head,
        )
        # Presence gate fuses both trained readouts of the objectness
        # pathway: the decoder-token one and the predictor's pooled one.
        return SegmentationResult.from_logits(
            mask_logits[0], objectness[0] + bundle.objectness_logit[0]
        )

    def segment_with_manual_prompts(self, image: torch.Tensor,
                                    prompts: ManualPrompts) -> SegmentationResult:
        """Fully manual mode: the prompt predictor is bypassed."""
        return self.backbone.segment_manual(image, prompts)

    # --------------------------------------------------------------- training
    def forward_training(self, images: torch.Tensor, class_id: int
                         ) -> tuple[PromptBundle, torch.Tensor, torch.Tensor]:
        """One differentiable pass for a batch.

        The image encoder is frozen under every policy, so embeddings are
        computed without autograd state.
        Returns (batched bundle, mask logits (B, H, W), objectness (B,)).
        """
        with torch.no_grad():
            embeddings = self.backbone.encode_image(images)
        return self.forward_from_embeddings(embeddings, class_id)

    def forward_from_embeddings(self, embeddings: torch.Tensor, class_id: int
                                ) -> tuple[PromptBundle, torch.Tensor, torch.Tensor]:
        bundle = self.ppn.forward(embeddings, class_id)
        sparse, dense = self.assemble_learned_prompts(bundle)
        mask_logits, objectness = self.backbone.decode(
            embeddings, sparse, dense,
            object_token=self.ppn.decoder_object_token,
            objectness_head=self.ppn.decoder_objectness_head,
        )
        return bundle, mask_logits, objectness

    def forward_manual_boxes(self, embeddings: torch.Tensor, boxes: torch.Tensor
                             ) -> tuple[torch.Tensor, torch.Tensor]:
        """Manual-style decode from ground-truth boxes (B, 4): box tokens plus
        the learned no-mask dense embedding, no predictor involvement."""
        enc = self.backbone.prompt_encoder
        sparse = enc.embed_boxes(boxes.unsqueeze(1))
        dense = enc.no_mask_dense(batch=embeddings.shape[0], dtype=embeddings.dtype)
        return self.backbone.decode(embeddings, sparse, dense)


def build_model(preset: str | GeometryPreset = "desk", num_classes: int = 1,
                tokens_per_class: int = 8, seed: int = 0,
                dtype: torch.dtype = torch.float32) -> PromptSegmenter:
    """Deterministically initialized model: same seed, same weights."""
    generator_state = torch.random.get_rng_state()
    torch.manual_seed(seed)
    try:
        model = PromptSegmenter(preset, num_classes=num_classes,
                                tokens_per_class=tokens_per_class)
    finally:
        torch.random.set_rng_state(generator_state)
    return model.to(dtype)
