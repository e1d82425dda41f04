"""Command-line entry point: synth / train / few-shot / eval / predict / serve.

Exit codes: 0 success, 1 domain error (single machine-parsable line on
stderr, prefixed "error:"), 2 usage error.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .errors import PromptSegError


def _fail(kind: str, message: str) -> None:
    click.echo(f"error: {kind}: {message}", err=True)
    sys.exit(1)


def _load_config(config_path: str, overrides: tuple[str, ...]):
    from .config import load_config
    from .errors import ConfigurationError

    try:
        return load_config(config_path, list(overrides))
    except ConfigurationError as e:
        raise click.UsageError(str(e))


@click.group()
def main():
    """Prompt-learning segmentation toolkit."""


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--count", type=int, required=True)
@click.option("--empty-fraction", type=float, default=0.2, show_default=True)
@click.option("--num-classes", type=int, default=1, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def synth(seed, count, empty_fraction, num_classes, out_dir):
    """Generate a synthetic ultrasound-like dataset (images/ + masks/)."""
    from .data import save_dataset
    from .synth import synth_generate

    try:
        samples = synth_generate(seed, count, empty_fraction, num_classes=num_classes)
        save_dataset(samples, out_dir)
    except PromptSegError as e:
        _fail(type(e).__name__, str(e))
    click.echo(f"wrote {len(samples)} image/mask pairs to {out_dir}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--set", "overrides", multiple=True,
              help="Dotted config override, e.g. --set loss.gamma=2")
@click.option("--resume", type=click.Path(exists=True, dir_okay=False), default=None)
def train(config_path, overrides, resume):
    """Run the training loop defined by a TOML config."""
    from .training import train as run_train

    config, _ = _load_config(config_path, overrides)
    try:
        result = run_train(config, resume_from=resume)
    except PromptSegError as e:
        _fail(type(e).__name__, str(e))
    click.echo(f"checkpoint: {result.checkpoint_path}")
    click.echo(f"metrics: {result.metrics_path}")


@main.command("few-shot")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--set", "overrides", multiple=True)
@click.option("-k", type=int, default=10, show_default=True)
def few_shot(config_path, overrides, k):
    """Train on the first k samples of the seeded shuffle."""
    from .training import few_shot_train

    config, _ = _load_config(config_path, overrides)
    try:
        result = few_shot_train(config, k=k)
    except PromptSegError as e:
        _fail(type(e).__name__, str(e))
    click.echo(f"checkpoint: {result.checkpoint_path}")


@main.command("eval")
@click.option("--mode", type=str, required=True,
              help="gt_box | learned | learned_plus_box | cosine_baseline")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--data", "data_root", type=click.Path(exists=True, file_okay=False),
              required=True)
@click.option("--class-id", type=int, default=0, show_default=True)
@click.option("--dataset-tag", type=str, default="dataset")
def eval_cmd(mode, checkpoint, data_root, class_id, dataset_tag):
    """Evaluate a checkpoint on a dataset directory; prints a metrics table."""
    from .checkpoint import load_model
    from .data import load_dataset, resize_pad
    from .evaluation import evaluate, format_table

    try:
        model, _ = load_model(checkpoint)
        samples = [resize_pad(s, model.preset)
                   for s in load_dataset(data_root, num_classes=model.num_classes)]
        reference = None
        if mode == "cosine_baseline":
            reference = next(s for s in samples if s.present[class_id])
        row = evaluate(model, samples, mode, class_id=class_id,
                       model_tag=Path(checkpoint).stem, dataset_tag=dataset_tag,
                       reference=reference)
    except PromptSegError as e:
        _fail(type(e).__name__, str(e))
    click.echo(format_table([row]), nl=False)


@main.command()
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--image", "image_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--mode", type=click.Choice(["auto", "semi", "manual"]), default="auto",
              show_default=True)
@click.option("--class-id", type=int, default=0, show_default=True)
@click.option("--point", "points", multiple=True,
              help="x,y,fg|bg in original pixels; repeatable")
@click.option("--box", "boxes", multiple=True, help="x1,y1,x2,y2 in original pixels")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def predict(checkpoint, image_path, mode, class_id, points, boxes, out_path):
    """Segment one image and write the mask PNG at the original resolution."""
    import numpy as np
    import torch
    from PIL import Image

    from .checkpoint import load_model
    from .data import mask_to_original, resize_pad
    from .structures import BACKGROUND, FOREGROUND, ManualPrompts, Sample

    manual_needed = bool(points or boxes)
    if mode == "auto" and manual_needed:
        raise click.UsageError("auto mode forbids prompts")
    if mode == "manual" and not manual_needed:
        raise click.UsageError("manual mode requires at least one --point/--box")

    try:
        model, _ = load_model(checkpoint)
        rgb = np.asarray(Image.open(image_path).convert("RGB"), dtype=np.float32) / 255.0
        image = torch.from_numpy(rgb).permute(2, 0, 1)
        sample = resize_pad(
            Sample.create(image, torch.zeros(1, *image.shape[-2:], dtype=torch.uint8),
                          source_id=image_path),
            model.preset,
        )
        record = sample.record
        manual = None
        if manual_needed:
            manual = ManualPrompts()
            for text in points:
                x, y, label = text.split(",")
                lab = FOREGROUND if label.strip() == "fg" else BACKGROUND
                manual.points.append((*record.to_model_xy(float(x), float(y)), lab))
            for text in boxes:
                x1, y1, x2, y2 = (float(v) for v in text.split(","))
                manual.boxes.append(record.box_to_model((x1, y1, x2, y2)))
            manual.validate(model.preset.mask_prompt_size)
        with torch.no_grad():
            if mode == "manual":
                result = model.segment_with_manual_prompts(sample.image, manual)
            else:
                result = model.segment_with_learned_prompts(sample.image, class_id, manual)
        mask = result.gated_mask if mode != "manual" else result.mask
        out = mask_to_original(mask, record)
        Image.fromarray((out.numpy() * 255).astype("uint8"), mode="L").save(out_path)
    except PromptSegError as e:
        _fail(type(e).__name__, str(e))
    click.echo(f"object_present: {result.object_present}")
    click.echo(f"mask: {out_path}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--port", type=int, default=None)
def serve(config_path, checkpoint, port):
    """Run the HTTP inference service."""
    from .checkpoint import load_model
    from .config import ServeConfig
    from .service import serve as run_serve

    serve_config = ServeConfig()
    if config_path:
        _, serve_config = _load_config(config_path, ())
    if checkpoint:
        serve_config.checkpoint = checkpoint
    if port is not None:
        serve_config.port = port
    if not serve_config.checkpoint:
        raise click.UsageError("serve needs a checkpoint (--checkpoint or [serve] config)")
    try:
        model, _ = load_model(serve_config.checkpoint)
    except PromptSegError as e:
        _fail(type(e).__name__, str(e))
    run_serve(model, port=serve_config.port,
              session_ttl_seconds=serve_config.session_ttl_seconds)


if __name__ == "__main__":
    main()
