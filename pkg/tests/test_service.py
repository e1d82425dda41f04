"""Service contracts: modes, sessions, geometry round trips, error codes."""

import base64
import io

import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient
from PIL import Image

from promptseg.model import build_model
from promptseg.rle import rle_decode
from promptseg.service import create_app
from promptseg.synth import synth_generate


def _png_b64(sample=None, size=(300, 220)) -> str:
    if sample is None:
        (sample,) = synth_generate(seed=61, count=1, empty_fraction=0.0,
                                   size_range=(size[1], size[1]))
    arr = (sample.image.permute(1, 2, 0).numpy() * 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


@pytest.fixture(scope="module")
def client():
    model = build_model("desk", seed=40)
    return TestClient(create_app(model))


@pytest.fixture(scope="module")
def image_b64():
    return _png_b64()


class TestPredictModes:
    def test_auto_returns_rle_mask(self, client, image_b64):
        r = client.post("/predict", json={"image": image_b64, "mode": "auto"})
        assert r.status_code == 200
        body = r.json()
        mask = rle_decode(body["mask_rle"])
        assert mask.shape == (body["height"], body["width"])

    def test_auto_with_prompts_rejected(self, client, image_b64):
        r = client.post("/predict", json={
            "image": image_b64, "mode": "auto",
            "prompts": {"points": [{"x": 10, "y": 10, "label": 1}]},
        })
        assert r.status_code == 400

    def test_auto_rejects_even_empty_prompt_object(self, client, image_b64):
        r = client.post("/predict", json={
            "image": image_b64, "mode": "auto", "prompts": {"points": [], "boxes": []},
        })
        assert r.status_code == 400

    def test_manual_requires_prompts(self, client, image_b64):
        r = client.post("/predict", json={"image": image_b64, "mode": "manual"})
        assert r.status_code == 400
        r = client.post("/predict", json={
            "image": image_b64, "mode": "manual",
            "prompts": {"points": [], "boxes": []},
        })
        assert r.status_code == 400

    def test_manual_with_box(self, client, image_b64):
        r = client.post("/predict", json={
            "image": image_b64, "mode": "manual",
            "prompts": {"boxes": [{"x1": 20, "y1": 30, "x2": 200, "y2": 120}]},
        })
        assert r.status_code == 200
        assert r.json()["gated"] is False

    def test_semi_accepts_optional_prompts(self, client, image_b64):
        assert client.post("/predict", json={
            "image": image_b64, "mode": "semi"}).status_code == 200
        assert client.post("/predict", json={
            "image": image_b64, "mode": "semi",
            "prompts": {"points": [{"x": 50, "y": 60, "label": 1}]},
        }).status_code == 200

    def test_unknown_mode(self, client, image_b64):
        r = client.post("/predict", json={"image": image_b64, "mode": "telepathy"})
        assert r.status_code == 400

    def test_undecodable_image(self, client):
        garbage = base64.b64encode(b"not a png").decode()
        r = client.post("/predict", json={"image": garbage, "mode": "auto"})
        assert r.status_code == 422

    def test_invalid_base64(self, client):
        r = client.post("/predict", json={"image": "@@@not-base64@@@", "mode": "auto"})
        assert r.status_code == 422

    def test_oversized_image_413(self, client):
        big = Image.new("L", (5000, 4000))
        buf = io.BytesIO()
        big.save(buf, format="PNG")
        r = client.post("/predict", json={
            "image": base64.b64encode(buf.getvalue()).decode(), "mode": "auto"})
        assert r.status_code == 413

    def test_bad_class_id(self, client, image_b64):
        r = client.post("/predict", json={"image": image_b64, "mode": "auto",
                                          "class_id": 5})
        assert r.status_code == 400

    def test_mode_isolation_auto_output_prompt_independent(self, client, image_b64):
        a = client.post("/predict", json={"image": image_b64, "mode": "auto"}).json()
        b = client.post("/predict", json={"image": image_b64, "mode": "auto"}).json()
        assert a["mask_rle"] == b["mask_rle"]
        assert a["objectness_logit"] == b["objectness_logit"]

    def test_geometry_round_trip_box_echo(self, client, image_b64):
        box = {"x1": 17.25, "y1": 33.5, "x2": 210.75, "y2": 140.25}
        r = client.post("/predict", json={
            "image": image_b64, "mode": "manual", "prompts": {"boxes": [box]}})
        echoed = r.json()["echo"]["boxes"][0]
        for key in box:
            assert abs(echoed[key] - box[key]) <= 0.5

    def test_out_of_bounds_prompt_rejected(self, client, image_b64):
        r = client.post("/predict", json={
            "image": image_b64, "mode": "manual",
            "prompts": {"points": [{"x": 9999, "y": 10, "label": 1}]}})
        assert r.status_code == 400


class TestSessions:
    def test_lifecycle_create_refine_accept(self, client, image_b64):
        created = client.post("/sessions", json={"image": image_b64}).json()
        sid = created["session_id"]
        assert created["prediction"]["mode"] == "auto"
        geom = created["geometry"]
        assert geom["input_size"] == 256 and geom["mask_prompt_size"] == 64

        r = client.post(f"/sessions/{sid}/refine", json={
            "prompts": {"points": [{"x": 80, "y": 90, "label": 1}]}})
        assert r.status_code == 200
        assert r.json()["step"] == 2

        state = client.get(f"/sessions/{sid}").json()
        assert state["steps"] == 2
        assert state["accepted"] is False

        accepted = client.post(f"/sessions/{sid}/accept")
        assert accepted.status_code == 200
        png = base64.b64decode(accepted.json()["mask_png"])
        mask = Image.open(io.BytesIO(png))
        assert mask.size == (accepted.json()["metadata"]["width"],
                             accepted.json()["metadata"]["height"])

    def test_refine_accumulates_prompts(self, client, image_b64):
        sid = client.post("/sessions", json={"image": image_b64}).json()["session_id"]
        client.post(f"/sessions/{sid}/refine", json={
            "prompts": {"points": [{"x": 30, "y": 40, "label": 1}]}})
        r = client.post(f"/sessions/{sid}/refine", json={
            "prompts": {"boxes": [{"x1": 10, "y1": 10, "x2": 100, "y2": 100}]}})
        echo = r.json()["prediction"]["echo"]
        assert len(echo["points"]) == 1 and len(echo["boxes"]) == 1

    def test_refine_after_accept_409(self, client, image_b64):
        sid = client.post("/sessions", json={"image": image_b64}).json()["session_id"]
        client.post(f"/sessions/{sid}/accept")
        r = client.post(f"/sessions/{sid}/refine", json={
            "prompts": {"points": [{"x": 10, "y": 10, "label": 1}]}})
        assert r.status_code == 409

    def test_double_accept_409(self, client, image_b64):
        sid = client.post("/sessions", json={"image": image_b64}).json()["session_id"]
        assert client.post(f"/sessions/{sid}/accept").status_code == 200
        assert client.post(f"/sessions/{sid}/accept").status_code == 409

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/deadbeef").status_code == 404
        assert client.post("/sessions/deadbeef/refine", json={
            "prompts": {"points": [{"x": 1, "y": 1, "label": 1}]}}).status_code == 404

    def test_get_is_idempotent(self, client, image_b64):
        sid = client.post("/sessions", json={"image": image_b64}).json()["session_id"]
        a = client.get(f"/sessions/{sid}").json()
        b = client.get(f"/sessions/{sid}").json()
        assert a == b

    def test_refine_needs_prompts(self, client, image_b64):
        sid = client.post("/sessions", json={"image": image_b64}).json()["session_id"]
        r = client.post(f"/sessions/{sid}/refine", json={
            "prompts": {"points": [], "boxes": []}})
        assert r.status_code == 400

    def test_mask_export_matches_original_dimensions(self, client):
        (sample,) = synth_generate(seed=62, count=1, empty_fraction=0.0,
                                   size_range=(230, 230))
        b64 = _png_b64(sample)
        sid = client.post("/sessions", json={"image": b64}).json()["session_id"]
        out = client.post(f"/sessions/{sid}/accept").json()
        png = Image.open(io.BytesIO(base64.b64decode(out["mask_png"])))
        h, w = sample.image.shape[-2:]
        assert png.size == (w, h)

    def test_session_ttl_eviction(self, image_b64):
        model = build_model("desk", seed=41)
        app = create_app(model, session_ttl_seconds=0.0)
        c = TestClient(app)
        sid = c.post("/sessions", json={"image": image_b64}).json()["session_id"]
        import time
        time.sleep(0.01)
        assert c.get(f"/sessions/{sid}").status_code == 404


class TestBrushPrompts:
    def test_brush_round_trip(self, client, image_b64):
        brush = torch.zeros(64, 64, dtype=torch.bool)
        brush[20:30, 10:50] = True
        from promptseg.rle import rle_encode
        r = client.post("/predict", json={
            "image": image_b64, "mode": "manual",
            "prompts": {"brush_mask": rle_encode(brush)}})
        assert r.status_code == 200

    def test_wrong_brush_resolution_400(self, client, image_b64):
        from promptseg.rle import rle_encode
        brush = torch.zeros(32, 32, dtype=torch.bool)
        r = client.post("/predict", json={
            "image": image_b64, "mode": "manual",
            "prompts": {"brush_mask": rle_encode(brush)}})
        assert r.status_code == 400
