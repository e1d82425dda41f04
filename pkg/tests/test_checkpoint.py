"""Named-tensor archive: round trips, external loading, corruption handling."""

import json
import zipfile

import pytest
import torch

from promptseg.checkpoint import (
    load_external_weights,
    load_model,
    read_tensor_archive,
    save_model,
    write_tensor_archive,
)
from promptseg.errors import CheckpointError
from promptseg.model import build_model


@pytest.fixture(scope="module")
def model():
    return build_model("desk", num_classes=2, seed=5)


class TestTensorArchive:
    def test_round_trip_exact(self, tmp_path):
        tensors = {
            "a.weight": torch.randn(3, 4),
            "b.bias": torch.arange(7, dtype=torch.int64),
            "c.flag": torch.tensor([True, False]),
            "d.big": torch.randn(16, 16, dtype=torch.float64),
        }
        path = tmp_path / "arc.ntz"
        write_tensor_archive(path, tensors, {"note": "x"})
        loaded, meta = read_tensor_archive(path)
        assert meta == {"note": "x"}
        assert set(loaded) == set(tensors)
        for name in tensors:
            assert torch.equal(loaded[name], tensors[name])
            assert loaded[name].dtype == tensors[name].dtype

    def test_corrupted_manifest_reports_byte_offset(self, tmp_path):
        path = tmp_path / "bad.ntz"
        with zipfile.ZipFile(path, "w") as zf:
            zf.writestr("manifest.json", '{"format": "promptseg-tensors/1", oops}')
        with pytest.raises(CheckpointError, match="byte offset"):
            read_tensor_archive(path)

    def test_not_a_zip(self, tmp_path):
        path = tmp_path / "junk.ntz"
        path.write_bytes(b"this is not a zip file")
        with pytest.raises(CheckpointError):
            read_tensor_archive(path)

    def test_truncated_payload_detected(self, tmp_path):
        path = tmp_path / "short.ntz"
        write_tensor_archive(path, {"w": torch.randn(4, 4)})
        # rewrite the tensor file with fewer bytes
        with zipfile.ZipFile(path, "r") as zf:
            manifest = json.loads(zf.read("manifest.json"))
            payload = zf.read(manifest["tensors"]["w"]["file"])
        with zipfile.ZipFile(path, "w") as zf:
            zf.writestr("manifest.json", json.dumps(manifest))
            zf.writestr(manifest["tensors"]["w"]["file"], payload[:-8])
        with pytest.raises(CheckpointError, match="bytes"):
            read_tensor_archive(path)


class TestModelRoundTrip:
    def test_save_load_identical_outputs(self, model, tmp_path):
        path = tmp_path / "model.ntz"
        save_model(path, model)
        loaded, meta = load_model(path)
        assert meta["unmapped"] == []
        assert meta["geometry"] == "desk"
        img = torch.rand(3, 256, 256, generator=torch.Generator().manual_seed(1))
        with torch.no_grad():
            a = model.segment_with_learned_prompts(img, 0)
            b = loaded.segment_with_learned_prompts(img, 0)
        assert torch.equal(a.mask_logits, b.mask_logits)
        assert torch.equal(a.objectness_logit, b.objectness_logit)

    def test_external_load_zero_unmapped(self, model, tmp_path):
        path = tmp_path / "model.ntz"
        save_model(path, model)
        loaded, unmapped = load_external_weights(path)
        assert unmapped == []
        assert loaded.preset.name == "desk"

    def test_geometry_inferred_without_meta(self, model, tmp_path):
        path = tmp_path / "raw.ntz"
        write_tensor_archive(path, dict(model.state_dict()), meta={})
        loaded, unmapped = load_external_weights(path)
        assert loaded.preset.name == "desk"
        assert unmapped == []

    def test_missing_decoder_tensors_enumerated(self, model, tmp_path):
        tensors = {k: v for k, v in model.state_dict().items()
                   if not k.startswith("backbone.mask_decoder.")}
        path = tmp_path / "partial.ntz"
        write_tensor_archive(path, tensors, {"geometry": "desk", "num_classes": 2})
        with pytest.raises(CheckpointError) as exc:
            load_model(path)
        message = str(exc.value)
        assert "missing tensors" in message
        dropped = [k for k in model.state_dict() if k.startswith("backbone.mask_decoder.")]
        for name in dropped:
            assert name in message

    def test_shape_mismatch_enumerated(self, model, tmp_path):
        tensors = dict(model.state_dict())
        tensors["ppn.class_tokens"] = torch.randn(9, 9, 9)
        path = tmp_path / "mismatch.ntz"
        write_tensor_archive(path, tensors, {"geometry": "desk", "num_classes": 2})
        with pytest.raises(CheckpointError, match="ppn.class_tokens"):
            load_model(path)

    def test_extra_tensors_reported_unmapped(self, model, tmp_path):
        tensors = dict(model.state_dict())
        tensors["legacy.iou_head.weight"] = torch.randn(4, 4)
        path = tmp_path / "extra.ntz"
        write_tensor_archive(path, tensors, {"geometry": "desk", "num_classes": 2})
        _, unmapped = load_external_weights(path)
        assert unmapped == ["legacy.iou_head.weight"]
