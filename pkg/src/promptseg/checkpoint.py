"""Named-tensor checkpoint archive.

Layout (a standard ZIP file, see README for the wire-level contract):

    manifest.json            {"format": "promptseg-tensors/1",
                              "meta": {...},        # free-form JSON
                              "tensors": {name: {"dtype": str,
                                                 "shape": [int, ...],
                                                 "file": "tensors/NNNNNN.bin"}}}
    tensors/NNNNNN.bin       raw little-endian C-order bytes, one per tensor

The format is deliberately language-neutral: any environment with a ZIP
reader and a JSON parser can consume it. Round trips are exact (raw bytes).
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointError
from .geometry import PRESETS
from .model import PromptSegmenter

FORMAT = "promptseg-tensors/1"

_DTYPES = {
    "float32": (torch.float32, np.float32),
    "float64": (torch.float64, np.float64),
    "int64": (torch.int64, np.int64),
    "int32": (torch.int32, np.int32),
    "uint8": (torch.uint8, np.uint8),
    "bool": (torch.bool, np.bool_),
}
_TORCH_TO_NAME = {v[0]: k for k, v in _DTYPES.items()}


def write_tensor_archive(path: str | Path, tensors: dict[str, torch.Tensor],
                         meta: dict | None = None) -> None:
    manifest: dict = {"format": FORMAT, "meta": meta or {}, "tensors": {}}
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for idx, (name, tensor) in enumerate(sorted(tensors.items())):
            dtype_name = _TORCH_TO_NAME.get(tensor.dtype)
            if dtype_name is None:
                raise CheckpointError(f"unsupported dtype {tensor.dtype} for tensor '{name}'")
            fname = f"tensors/{idx:06d}.bin"
            data = tensor.detach().cpu().contiguous().numpy()
            zf.writestr(fname, data.tobytes())
            manifest["tensors"][name] = {
                "dtype": dtype_name,
                "shape": list(tensor.shape),
                "file": fname,
            }
        zf.writestr("manifest.json", json.dumps(manifest, indent=1, sort_keys=True))


def read_tensor_archive(path: str | Path) -> tuple[dict[str, torch.Tensor], dict]:
    """-> (tensors by name, meta). Raises CheckpointError on malformed archives."""
    try:
        zf = zipfile.ZipFile(path, "r")
    except (zipfile.BadZipFile, OSError) as e:
        raise CheckpointError(f"cannot open archive {path}: {e}") from e
    with zf:
        try:
            raw = zf.read("manifest.json")
        except KeyError:
            raise CheckpointError(f"archive {path} has no manifest.json") from None
        try:
            manifest = json.loads(raw)
        except json.JSONDecodeError as e:
            raise CheckpointError(
                f"manifest parse error at byte offset {e.pos}: {e.msg}"
            ) from e
        if manifest.get("format") != FORMAT:
            raise CheckpointError(
                f"unsupported archive format {manifest.get('format')!r}, expected {FORMAT!r}"
            )
        tensors: dict[str, torch.Tensor] = {}
        for name, entry in manifest["tensors"].items():
            if entry["dtype"] not in _DTYPES:
                raise CheckpointError(f"tensor '{name}' has unknown dtype {entry['dtype']!r}")
            torch_dtype, np_dtype = _DTYPES[entry["dtype"]]
            buf = zf.read(entry["file"])
            shape = tuple(entry["shape"])
            expected = int(np.prod(shape, dtype=np.int64)) * np.dtype(np_dtype).itemsize
            if len(buf) != expected:
                raise CheckpointError(
                    f"tensor '{name}': payload has {len(buf)} bytes, expected {expected}"
                )
            arr = np.frombuffer(buf, dtype=np_dtype).reshape(shape).copy()
            tensors[name] = torch.from_numpy(arr).to(torch_dtype)
        return tensors, manifest.get("meta", {})


# --------------------------------------------------------------- model I/O
def model_meta(model: PromptSegmenter) -> dict:
    return {
        "geometry": model.preset.name,
        "num_classes": model.num_classes,
        "tokens_per_class": model.ppn.tokens_per_class,
    }


def _model_tensors(model: torch.nn.Module) -> dict[str, torch.Tensor]:
    return dict(model.state_dict())


def save_model(path: str | Path, model: PromptSegmenter,
               extra_meta: dict | None = None,
               extra_tensors: dict[str, torch.Tensor] | None = None) -> None:
    meta = model_meta(model)
    if extra_meta:
        meta.update(extra_meta)
    tensors = _model_tensors(model)
    if extra_tensors:
        tensors.update(extra_tensors)
    write_tensor_archive(path, tensors, meta)


def apply_tensors(model: torch.nn.Module, tensors: dict[str, torch.Tensor]
                  ) -> list[str]:
    """Copy matching archive tensors into the model.

    Raises CheckpointError enumerating every missing or shape/dtype-mismatched
    model tensor; returns the archive names that map to nothing in the model.
    """
    state = model.state_dict()
    missing = [name for name in state if name not in tensors]
    mismatched = []
    for name, target in state.items():
        if name not in tensors:
            continue
        src = tensors[name]
        if tuple(src.shape) != tuple(target.shape):
            mismatched.append(
                f"{name}: archive shape {tuple(src.shape)} != model {tuple(target.shape)}"
            )
    if missing or mismatched:
        parts = []
        if missing:
            parts.append("missing tensors: " + ", ".join(sorted(missing)))
        if mismatched:
            parts.append("mismatched tensors: " + "; ".join(sorted(mismatched)))
        raise CheckpointError("; ".join(parts))
    with torch.no_grad():
        for name, target in state.items():
            target.copy_(tensors[name].to(target.dtype))
    unmapped = sorted(set(tensors) - set(state))
    return unmapped


def _infer_geometry(tensors: dict[str, torch.Tensor]) -> str:
    for name, t in tensors.items():
        if name.endswith("patch_embed.weight") and t.ndim == 4:
            channels = t.shape[0]
            for preset_name, preset in PRESETS.items():
                if preset.embed_channels == channels:
                    return preset_name
            raise CheckpointError(
                f"no geometry preset with embed_channels={channels} "
                f"(from tensor '{name}')"
            )
    raise CheckpointError("cannot infer geometry: no patch_embed.weight tensor found")


def load_model(path: str | Path) -> tuple[PromptSegmenter, dict]:
    """Instantiate a model from an archive written by save_model.

    Geometry, class count and tokens-per-class fall back to inference from
    tensor shapes when the manifest does not carry them.
    """
    tensors, meta = read_tensor_archive(path)
    geometry = meta.get("geometry") or _infer_geometry(tensors)
    bank = tensors.get("ppn.class_tokens")
    inferred_classes, inferred_tokens = (bank.shape[0], bank.shape[1]) if bank is not None \
        else (1, 8)
    num_classes = int(meta.get("num_classes", inferred_classes))
    tokens = int(meta.get("tokens_per_class", inferred_tokens))
    model = PromptSegmenter(geometry, num_classes=num_classes, tokens_per_class=tokens)
    if any(t.dtype == torch.float64 for t in tensors.values()):
        model = model.double()
    unmapped = apply_tensors(model, {k: v for k, v in tensors.items()
                                     if not k.startswith("optim.")})
    meta = dict(meta)
    meta["unmapped"] = unmapped
    return model, meta


def load_external_weights(archive_path: str | Path) -> tuple[PromptSegmenter, list[str]]:
    """Adapter for externally produced archives.

    The geometry preset is inferred from tensor shapes when the manifest
    carries no geometry key. Every model tensor must be present (missing or
    mismatched tensors raise a CheckpointError enumerating all of them);
    archive tensors that map to nothing are returned as the unmapped list.
    """
    model, meta = load_model(archive_path)
    return model, meta["unmapped"]
