"""Metrics, the evaluation harness, and the cosine-similarity baseline."""

import numpy as np
import pytest
import torch

from promptseg.errors import InputError
from promptseg.evaluation import (
    cosine_baseline_prompts,
    dice_iou,
    evaluate,
    format_dice_iou,
    format_table,
)
from promptseg.model import build_model
from promptseg.structures import ManualPrompts, Sample, SegmentationResult
from promptseg.synth import synth_generate
from promptseg.data import resize_pad


def _mask(h, w, rows, cols):
    m = torch.zeros(h, w, dtype=torch.bool)
    m[rows[0]:rows[1], cols[0]:cols[1]] = True
    return m


class TestDiceIou:
    def test_identity(self):
        m = _mask(20, 20, (3, 10), (4, 12))
        assert dice_iou(m, m) == (1.0, 1.0)

    def test_disjoint(self):
        a = _mask(20, 20, (0, 5), (0, 5))
        b = _mask(20, 20, (10, 15), (10, 15))
        assert dice_iou(a, b) == (0.0, 0.0)

    def test_half_overlap_block(self):
        # gt cols 0..9, pred cols 5..14 over 10 rows: dice .5, iou 1/3
        gt = _mask(10, 20, (0, 10), (0, 10))
        pred = _mask(10, 20, (0, 10), (5, 15))
        dice, iou = dice_iou(pred, gt)
        assert dice == pytest.approx(0.5)
        assert iou == pytest.approx(1 / 3)

    def test_empty_conventions(self):
        empty = torch.zeros(8, 8, dtype=torch.bool)
        full = _mask(8, 8, (0, 4), (0, 4))
        assert dice_iou(empty, empty) == (1.0, 1.0)
        assert dice_iou(full, empty) == (0.0, 0.0)
        assert dice_iou(empty, full) == (0.0, 0.0)

    def test_dice_iou_identity_random(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a = torch.from_numpy(rng.random((16, 16)) > 0.5)
            b = torch.from_numpy(rng.random((16, 16)) > 0.5)
            dice, iou = dice_iou(a, b)
            if iou > 0:
                assert abs(dice - 2 * iou / (1 + iou)) < 1e-9

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a = torch.from_numpy(rng.random((12, 12)) > 0.4)
            b = torch.from_numpy(rng.random((12, 12)) > 0.6)
            assert dice_iou(a, b) == dice_iou(b, a)

    def test_erosion_strictly_degrades(self):
        gt = _mask(32, 32, (8, 24), (8, 24))
        pred = gt.clone()
        prev = dice_iou(pred, gt)
        for shrink in (1, 2, 3):
            eroded = _mask(32, 32, (8 + shrink, 24 - shrink), (8 + shrink, 24 - shrink))
            cur = dice_iou(eroded, gt)
            assert cur[0] < prev[0] and cur[1] < prev[1]
            prev = cur

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            dice_iou(torch.zeros(4, 4, dtype=torch.bool),
                     torch.zeros(4, 5, dtype=torch.bool))


class _OracleModel:
    """Returns the ground truth it is handed; presence decisions always right."""

    def __init__(self, samples, class_id=0):
        self.lookup = {id(s.image): s for s in samples}
        self.class_id = class_id

    def _result(self, image):
        sample = self.lookup[id(image)]
        gt = sample.masks[self.class_id].bool()
        logit = torch.tensor(5.0 if gt.any() else -5.0)
        logits = torch.where(gt, torch.tensor(10.0), torch.tensor(-10.0))
        return SegmentationResult.from_logits(logits, logit)

    def segment_with_learned_prompts(self, image, class_id, manual=None):
        return self._result(image)

    def segment_with_manual_prompts(self, image, prompts):
        return self._result(image)


class TestEvaluate:
    def test_oracle_model_scores_perfectly(self):
        samples = [resize_pad(s, "desk")
                   for s in synth_generate(seed=31, count=10, empty_fraction=0.2)]
        oracle = _OracleModel(samples)
        for mode in ("learned", "gt_box", "learned_plus_box"):
            row = evaluate(oracle, samples, mode)
            assert row.dice == 1.0 and row.iou == 1.0
            assert row.n_images == 10

    def test_unknown_mode_rejected(self):
        samples = [resize_pad(s, "desk") for s in synth_generate(seed=31, count=1)]
        with pytest.raises(InputError):
            evaluate(_OracleModel(samples), samples, "psychic")

    def test_per_image_identity_holds(self):
        samples = [resize_pad(s, "desk")
                   for s in synth_generate(seed=32, count=6, empty_fraction=0.3)]
        row = evaluate(_OracleModel(samples), samples, "learned")
        for dice, iou in row.per_image:
            if iou > 0:
                assert abs(dice - 2 * iou / (1 + iou)) < 1e-9


class TestCosineBaseline:
    def test_self_reference_top_patch_inside_mask(self):
        model = build_model("desk", seed=33).eval()
        (raw,) = synth_generate(seed=33, count=1, empty_fraction=0.0)
        sample = resize_pad(raw, "desk")
        with torch.no_grad():
            embedding = model.backbone.encode_image(sample.image)
        prompts = cosine_baseline_prompts(sample, embedding, backbone=model.backbone)
        assert len(prompts.points) == 1 and len(prompts.boxes) == 1
        x, y, label = prompts.points[0]
        h, w = sample.masks[0].shape
        px, py = int(x * w), int(y * h)
        # the top-1 patch center must fall inside (dilated) ground truth
        region = sample.masks[0][max(0, py - 8): py + 8, max(0, px - 8): px + 8]
        assert region.any()

    def test_uniform_embedding_deterministic_tie_break(self):
        model = build_model("desk", seed=34).eval()
        (raw,) = synth_generate(seed=34, count=1, empty_fraction=0.0)
        sample = resize_pad(raw, "desk")
        uniform = torch.ones(128, 16, 16)
        prompts = cosine_baseline_prompts(sample, uniform, backbone=model.backbone)
        # all similarities tie -> lowest flat index = patch (0, 0)
        assert prompts.points[0][:2] == (0.5 / 16, 0.5 / 16)
        assert prompts.boxes[0] == (0.0, 0.0, 1.0, 1.0)

    def test_empty_reference_rejected(self):
        model = build_model("desk", seed=35).eval()
        (raw,) = synth_generate(seed=35, count=1, empty_fraction=1.0)
        sample = resize_pad(raw, "desk")
        with pytest.raises(InputError):
            cosine_baseline_prompts(sample, torch.randn(128, 16, 16),
                                    backbone=model.backbone)


class TestReports:
    def test_paper_style_dice_iou_format(self):
        assert format_dice_iou(0.782, 0.652) == "78.2/65.2"
        assert format_dice_iou(0.831, 0.717) == "83.1/71.7"

    def test_table_format(self):
        from promptseg.evaluation import MetricRow
        rows = [MetricRow("toy", "synth", "learned", 0.9512, 0.9087, 100)]
        table = format_table(rows)
        lines = table.strip().split("\n")
        assert lines[0].split("\t") == ["model", "dataset", "prompt_mode",
                                        "dice_iou", "n_images"]
        assert lines[1].split("\t") == ["toy", "synth", "learned", "95.1/90.9", "100"]
