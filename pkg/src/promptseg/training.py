"""Optimization loop: AdamW with two parameter groups, checkpointing, few-shot.

The image and prompt encoders never train; the predictor group runs at
lr_ppn and any trainable decoder parameters (LoRA or full) at lr_decoder,
both under decoupled weight decay. Every random draw (batch sampling,
augmentation) derives from (seed, step, slot), so runs are reproducible
and checkpoint resume replays the exact data order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .checkpoint import model_meta, read_tensor_archive, apply_tensors, write_tensor_archive
from .data import AugmentationPolicy, augment, derive_seed, load_dataset, resize_pad
from .errors import ConfigurationError, InputError
from .losses import LossReport, LossWeights, focal_loss, objectness_loss, total_loss
from .model import PromptSegmenter, build_model
from .peft import FreezePolicy, apply_policy, frozen_integrity_check, optimizer_param_groups, snapshot_frozen
from .structures import SegmentationResult, Sample, tight_box
from .synth import synth_generate


@dataclass(frozen=True)
class SyntheticDataConfig:
    seed: int = 11
    count: int = 150
    empty_fraction: float = 0.2
    train_count: int = 50
    test_count: int = 100


@dataclass
class TrainConfig:
    seed: int = 0
    geometry: str = "desk"
    out_dir: str = "runs/default"
    precision: str = "float32"
    num_classes: int = 1
    tokens_per_class: int = 8
    max_steps: int = 2000
    batch_size: int = 4
    lr_ppn: float = 1e-4
    lr_decoder: float = 1e-5
    weight_decay: float = 0.1
    checkpoint_every: int = 500
    manual_prompt_sim: str = "auto"  # "auto" | "on" | "off": gt-box decode pass
    data_root: str | None = None
    synthetic: SyntheticDataConfig = field(default_factory=SyntheticDataConfig)
    freeze: FreezePolicy = field(default_factory=FreezePolicy)
    loss: LossWeights = field(default_factory=LossWeights)
    augment: AugmentationPolicy = field(default_factory=AugmentationPolicy)
    augment_enabled: bool = True

    def torch_dtype(self) -> torch.dtype:
        if self.precision == "float32":
            return torch.float32
        if self.precision == "float64":
            return torch.float64
        raise ConfigurationError(f"precision must be float32/float64, got {self.precision!r}")


@dataclass
class TrainResult:
    checkpoint_path: Path
    metrics_path: Path
    model: PromptSegmenter
    reports: list[dict]


def prepare_data(config: TrainConfig) -> tuple[list[Sample], list[Sample]]:
    """Model-space (resized + padded) train/test samples."""
    if config.data_root:
        samples = load_dataset(config.data_root, num_classes=config.num_classes)
        train, test = samples, []
    else:
        sy = config.synthetic
        samples = synth_generate(sy.seed, sy.count, sy.empty_fraction,
                                 num_classes=config.num_classes)
        train = samples[: sy.train_count]
        test = samples[sy.train_count: sy.train_count + sy.test_count]
    train = [resize_pad(s, config.geometry) for s in train]
    test = [resize_pad(s, config.geometry) for s in test]
    return train, test


def select_few_shot(samples: list[Sample], k: int, seed: int) -> list[Sample]:
    """First k samples of the seeded shuffle."""
    if k > len(samples):
        raise InputError(f"k={k} exceeds dataset size {len(samples)}")
    order = np.random.default_rng(seed).permutation(len(samples))
    return [samples[i] for i in order[:k]]


def _assert_finite_report(report: LossReport, step: int) -> None:
    values = report.detached()
    if all(np.isfinite(v) for v in values.values()):
        return
    breakdown = ", ".join(f"{k}={v:.6g}" for k, v in values.items())
    raise RuntimeError(f"non-finite loss at step {step}: {breakdown}")


def _batch_reports_mean(reports: list[LossReport]) -> LossReport:
    def mean(name):
        return torch.stack([getattr(r, name) for r in reports]).mean()
    return LossReport(**{name: mean(name) for name in LossReport.FIELDS})


class _Trainer:
    def __init__(self, config: TrainConfig, train_samples: list[Sample]):
        if not train_samples:
            raise ConfigurationError("training dataset is empty")
        self.config = config
        self.samples = train_samples
        self.dtype = config.torch_dtype()
        torch.manual_seed(config.seed)
        self.model = build_model(config.geometry, num_classes=config.num_classes,
                                 tokens_per_class=config.tokens_per_class,
                                 seed=config.seed, dtype=self.dtype)
        self.census = apply_policy(self.model, config.freeze)
        self.model = self.model.to(self.dtype)  # LoRA params follow model dtype
        self.snapshot = snapshot_frozen(self.model)
        self.optimizer = torch.optim.AdamW(
            optimizer_param_groups(self.model, config.lr_ppn, config.lr_decoder),
            weight_decay=config.weight_decay,
        )
        self.embed_cache: dict[int, torch.Tensor] = {}
        self.decoder_trainable = config.freeze.mode != "ppn_only"
        sim = config.manual_prompt_sim
        if sim not in ("auto", "on", "off"):
            raise ConfigurationError(f"manual_prompt_sim must be auto/on/off, got {sim!r}")
        self.manual_sim = self.decoder_trainable if sim == "auto" else sim == "on"

    # ------------------------------------------------------------ embeddings
    def _embeddings(self, idx: list[int], batch: list[Sample]) -> torch.Tensor:
        if self.config.augment_enabled:
            images = torch.stack([s.image for s in batch]).to(self.dtype)
            with torch.no_grad():
                return self.model.backbone.encode_image(images)
        out = []
        with torch.no_grad():
            for i, s in zip(idx, batch):
                if i not in self.embed_cache:
                    self.embed_cache[i] = self.model.backbone.encode_image(
                        s.image.to(self.dtype).unsqueeze(0))[0]
                out.append(self.embed_cache[i])
        return torch.stack(out)

    # -------------------------------------------------------------- one step
    def step(self, step_idx: int) -> LossReport:
        cfg = self.config
        rng = np.random.default_rng(derive_seed(cfg.seed, step_idx, 0))
        n = len(self.samples)
        replace_draw = n < cfg.batch_size
        idx = rng.choice(n, size=cfg.batch_size, replace=replace_draw).tolist()
        class_id = int(rng.integers(cfg.num_classes)) if cfg.num_classes > 1 else 0

        batch = []
        for j, i in enumerate(idx):
            s = self.samples[i]
            if cfg.augment_enabled:
                s = augment(s, cfg.augment, derive_seed(cfg.seed, step_idx, 1 + j))
            batch.append(s)

        embeddings = self._embeddings(idx, batch)
        bundle, logits, objectness = self.model.forward_from_embeddings(embeddings, class_id)

        reports = []
        for j, s in enumerate(batch):
            present = s.present[class_id]
            gt_mask = s.masks[class_id].to(self.dtype)
            gt_box = tight_box(s.masks[class_id]) if present else None
            result = SegmentationResult(
                mask_logits=logits[j], mask=logits[j].detach() > 0,
                objectness_logit=objectness[j], object_present=present,
            )
            reports.append(total_loss(bundle.select(j), result, gt_mask, gt_box,
                                      present, cfg.loss))
        report = _batch_reports_mean(reports)
        loss = report.total

        if self.manual_sim:
            loss = loss + self._manual_sim_loss(embeddings, batch, class_id)

        self.optimizer.zero_grad(set_to_none=True)
        loss.backward()
        self.optimizer.step()
        _assert_finite_report(report, step_idx)
        return report

    def _manual_sim_loss(self, embeddings: torch.Tensor, batch: list[Sample],
                         class_id: int) -> torch.Tensor:
        """Decoder-only pass with ground-truth box prompts (and empty prompts on
        absent samples) so manual prompting works after decoder fine-tuning."""
        cfg = self.config
        present_idx = [j for j, s in enumerate(batch) if s.present[class_id]]
        absent_idx = [j for j, s in enumerate(batch) if not s.present[class_id]]
        loss = torch.zeros((), dtype=self.dtype)
        count = 0
        if present_idx:
            boxes = torch.stack([
                torch.tensor(tight_box(batch[j].masks[class_id]), dtype=self.dtype)
                for j in present_idx])
            m_logits, m_obj = self.model.forward_manual_boxes(embeddings[present_idx], boxes)
            for pos, j in enumerate(present_idx):
                gt = batch[j].masks[class_id].to(self.dtype)
                loss = loss + cfg.loss.lambda1 * focal_loss(
                    torch.sigmoid(m_logits[pos]), gt, cfg.loss.gamma, cfg.loss.alpha)
                loss = loss + cfg.loss.lambda3 * objectness_loss(m_obj[pos], True)
                count += 1
        if absent_idx:
            enc = self.model.backbone.prompt_encoder
            sparse = torch.zeros(len(absent_idx), 0, enc.embed_dim, dtype=self.dtype)
            dense = enc.no_mask_dense(batch=len(absent_idx), dtype=self.dtype)
            _, a_obj = self.model.backbone.decode(embeddings[absent_idx], sparse, dense)
            for pos in range(len(absent_idx)):
                loss = loss + cfg.loss.lambda3 * objectness_loss(a_obj[pos], False)
                count += 1
        return loss / max(count, 1)

    # ----------------------------------------------------------- checkpoints
    def save(self, path: Path, step: int) -> None:
        extra = {"step": step, "freeze_mode": self.config.freeze.mode,
                 "lora_rank": self.config.freeze.lora_rank,
                 "lora_alpha": self.config.freeze.lora_alpha}
        tensors = dict(self.model.state_dict())
        tensors.update(self._optimizer_tensors())
        meta = model_meta(self.model)
        meta.update(extra)
        write_tensor_archive(path, tensors, meta)

    def _optimizer_tensors(self) -> dict[str, torch.Tensor]:
        out = {}
        for gi, group in enumerate(self.optimizer.param_groups):
            for pi, p in enumerate(group["params"]):
                state = self.optimizer.state.get(p)
                if not state:
                    continue
                prefix = f"optim.{gi}.{pi}"
                out[f"{prefix}.step"] = torch.as_tensor(state["step"], dtype=torch.float32)
                out[f"{prefix}.exp_avg"] = state["exp_avg"]
                out[f"{prefix}.exp_avg_sq"] = state["exp_avg_sq"]
        return out

    def load(self, path: Path) -> int:
        tensors, meta = read_tensor_archive(path)
        model_tensors = {k: v for k, v in tensors.items() if not k.startswith("optim.")}
        apply_tensors(self.model, model_tensors)
        for gi, group in enumerate(self.optimizer.param_groups):
            for pi, p in enumerate(group["params"]):
                prefix = f"optim.{gi}.{pi}"
                if f"{prefix}.exp_avg" not in tensors:
                    continue
                self.optimizer.state[p] = {
                    "step": tensors[f"{prefix}.step"].to(torch.float32).reshape(()),
                    "exp_avg": tensors[f"{prefix}.exp_avg"].to(self.dtype),
                    "exp_avg_sq": tensors[f"{prefix}.exp_avg_sq"].to(self.dtype),
                }
        return int(meta.get("step", 0))


def train(config: TrainConfig, train_samples: list[Sample] | None = None,
          resume_from: str | Path | None = None) -> TrainResult:
    """Run the loop to max_steps; returns the final checkpoint and metrics log."""
    if train_samples is None:
        train_samples, _ = prepare_data(config)
    trainer = _Trainer(config, train_samples)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.jsonl"

    start = 0
    mode = "w"
    if resume_from is not None:
        start = trainer.load(Path(resume_from))
        mode = "a"

    reports: list[dict] = []
    with open(metrics_path, mode) as log:
        for step_idx in range(start, config.max_steps):
            report = trainer.step(step_idx)
            record = {"step": step_idx, **report.detached()}
            reports.append(record)
            log.write(json.dumps(record) + "\n")
            done = step_idx + 1
            if config.checkpoint_every and done % config.checkpoint_every == 0 \
                    and done < config.max_steps:
                trainer.save(out_dir / f"checkpoint_{done:06d}.ntz", done)

    final_path = out_dir / "checkpoint_final.ntz"
    trainer.save(final_path, config.max_steps)
    if not frozen_integrity_check(trainer.model, trainer.snapshot):
        raise RuntimeError("frozen parameters changed during training")
    return TrainResult(checkpoint_path=final_path, metrics_path=metrics_path,
                       model=trainer.model, reports=reports)


def few_shot_train(config: TrainConfig, k: int = 10) -> TrainResult:
    """Train on exactly the first k samples of the seeded shuffle."""
    train_samples, _ = prepare_data(config)
    subset = select_few_shot(train_samples, k, config.seed)
    return train(config, train_samples=subset)
