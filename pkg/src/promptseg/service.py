"""HTTP inference service: the three operating modes plus interactive sessions.

Modes on POST /predict:
    auto    learned prompts only; supplying prompts is a 400
    manual  user prompts only (predictor bypassed); at least one required
    semi    learned prompts concatenated with any user prompts

Sessions support the labeling loop: create (runs an initial auto
prediction), refine (semi mode with cumulative prompts), accept (freezes
the session and exports the mask as a PNG at the original resolution).
Prompt coordinates travel in original image pixels and are converted via
the stored pad/scale record; masks travel as run-length encodings.
"""

from __future__ import annotations

import base64
import io
import threading
import time
import uuid
from dataclasses import dataclass, field

import torch
from fastapi import FastAPI, HTTPException
from PIL import Image
from pydantic import BaseModel

from .data import mask_to_original, resize_pad
from .errors import InputError
from .model import PromptSegmenter
from .rle import rle_decode, rle_encode
from .structures import ManualPrompts, PadScaleRecord, Sample, SegmentationResult

MAX_PIXELS = 4096 * 4096
MODES = ("auto", "manual", "semi")


class PointIn(BaseModel):
    x: float
    y: float
    label: int  # 1 foreground, 0 background


class BoxIn(BaseModel):
    x1: float
    y1: float
    x2: float
    y2: float


class RleIn(BaseModel):
    size: list[int]
    counts: list[int]


class PromptsIn(BaseModel):
    points: list[PointIn] = []
    boxes: list[BoxIn] = []
    brush_mask: RleIn | None = None

    @property
    def is_empty(self) -> bool:
        return not self.points and not self.boxes and self.brush_mask is None


class PredictIn(BaseModel):
    image: str  # base64 PNG
    class_id: int = 0
    mode: str
    prompts: PromptsIn | None = None


class SessionIn(BaseModel):
    image: str
    class_id: int = 0


class RefineIn(BaseModel):
    prompts: PromptsIn


@dataclass
class SessionState:
    image: torch.Tensor  # model-space (3, S, S)
    record: PadScaleRecord
    class_id: int
    created_at: float
    history: list[dict] = field(default_factory=list)
    prompts: list[PromptsIn] = field(default_factory=list)
    accepted: bool = False
    last_mask: torch.Tensor | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)


def _decode_image(b64: str, preset) -> tuple[torch.Tensor, PadScaleRecord]:
    try:
        raw = base64.b64decode(b64, validate=True)
    except Exception:
        raise HTTPException(status_code=422, detail="image is not valid base64")
    if len(raw) > 4 * MAX_PIXELS:
        raise HTTPException(status_code=413, detail="image payload too large")
    try:
        pil = Image.open(io.BytesIO(raw))
        pil.load()
    except Exception:
        raise HTTPException(status_code=422, detail="image cannot be decoded")
    if pil.width * pil.height > MAX_PIXELS:
        raise HTTPException(status_code=413,
                            detail=f"image exceeds {MAX_PIXELS} pixels")
    import numpy as np
    rgb = np.asarray(pil.convert("RGB"), dtype=np.float32) / 255.0
    image = torch.from_numpy(rgb).permute(2, 0, 1)
    sample = Sample.create(image, torch.zeros(1, *image.shape[-2:], dtype=torch.uint8))
    sample = resize_pad(sample, preset)
    return sample.image, sample.record


def _convert_prompts(prompts: PromptsIn, record: PadScaleRecord,
                     mask_prompt_size: int) -> ManualPrompts:
    """Original-pixel prompts -> normalized model-space ManualPrompts."""
    manual = ManualPrompts()
    for p in prompts.points:
        x, y = record.to_model_xy(p.x, p.y)
        manual.points.append((x, y, p.label))
    for b in prompts.boxes:
        manual.boxes.append(record.box_to_model((b.x1, b.y1, b.x2, b.y2)))
    if prompts.brush_mask is not None:
        brush = rle_decode(prompts.brush_mask.model_dump())
        manual.brush_mask = brush
    try:
        manual.validate(mask_prompt_size)
    except InputError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return manual


def _echo_prompts(prompts: PromptsIn | None) -> dict:
    if prompts is None:
        return {"points": [], "boxes": []}
    return {
        "points": [p.model_dump() for p in prompts.points],
        "boxes": [b.model_dump() for b in prompts.boxes],
    }


def _merge_prompts(history: list[PromptsIn]) -> PromptsIn:
    merged = PromptsIn()
    for p in history:
        merged.points.extend(p.points)
        merged.boxes.extend(p.boxes)
        if p.brush_mask is not None:
            merged.brush_mask = p.brush_mask  # latest brush wins
    return merged


def create_app(model: PromptSegmenter, session_ttl_seconds: float = 3600.0) -> FastAPI:
    app = FastAPI(title="promptseg service")
    model.eval()
    preset = model.preset
    sessions: dict[str, SessionState] = {}
    sessions_lock = threading.Lock()

    def _evict_expired() -> None:
        now = time.monotonic()
        with sessions_lock:
            dead = [sid for sid, s in sessions.items()
                    if now - s.created_at > session_ttl_seconds]
            for sid in dead:
                del sessions[sid]

    def _get_session(session_id: str) -> SessionState:
        _evict_expired()
        with sessions_lock:
            session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return session

    def _run(image: torch.Tensor, class_id: int, mode: str,
             manual: ManualPrompts | None) -> SegmentationResult:
        if not 0 <= class_id < model.num_classes:
            raise HTTPException(status_code=400,
                                detail=f"class_id {class_id} out of range")
        with torch.no_grad():
            if mode == "manual":
                return model.segment_with_manual_prompts(image, manual)
            return model.segment_with_learned_prompts(image, class_id, manual)

    def _prediction_payload(result: SegmentationResult, record: PadScaleRecord,
                            mode: str, prompts: PromptsIn | None) -> dict:
        gated = mode in ("auto", "semi")
        mask = result.gated_mask if gated else result.mask
        return {
            "mask_rle": rle_encode(mask_to_original(mask, record)),
            "object_present": result.object_present,
            "objectness_logit": float(result.objectness_logit),
            "mode": mode,
            "gated": gated,
            "width": record.orig_w,
            "height": record.orig_h,
            "echo": _echo_prompts(prompts),
        }

    @app.post("/predict")
    def predict(body: PredictIn):
        if body.mode not in MODES:
            raise HTTPException(status_code=400,
                                detail=f"mode must be one of {MODES}, got {body.mode!r}")
        has_prompts = body.prompts is not None and not body.prompts.is_empty
        if body.mode == "auto" and body.prompts is not None:
            raise HTTPException(status_code=400, detail="auto mode forbids prompts")
        if body.mode == "manual" and not has_prompts:
            raise HTTPException(status_code=400,
                                detail="manual mode requires at least one prompt")
        image, record = _decode_image(body.image, preset)
        manual = None
        if has_prompts:
            manual = _convert_prompts(body.prompts, record, preset.mask_prompt_size)
        result = _run(image, body.class_id, body.mode, manual)
        return _prediction_payload(result, record, body.mode, body.prompts)

    @app.post("/sessions")
    def create_session(body: SessionIn):
        image, record = _decode_image(body.image, preset)
        session = SessionState(image=image, record=record, class_id=body.class_id,
                               created_at=time.monotonic())
        result = _run(image, body.class_id, "auto", None)
        payload = _prediction_payload(result, record, "auto", None)
        session.history.append(payload)
        session.last_mask = result.gated_mask
        session_id = uuid.uuid4().hex
        with sessions_lock:
            sessions[session_id] = session
        return {
            "session_id": session_id,
            "prediction": payload,
            "geometry": {
                "input_size": preset.input_size,
                "mask_prompt_size": preset.mask_prompt_size,
                "scale": record.scale,
                "content_w": record.content_w,
                "content_h": record.content_h,
                "width": record.orig_w,
                "height": record.orig_h,
            },
        }

    @app.post("/sessions/{session_id}/refine")
    def refine(session_id: str, body: RefineIn):
        session = _get_session(session_id)
        with session.lock:
            if session.accepted:
                raise HTTPException(status_code=409,
                                    detail="session already accepted")
            if body.prompts.is_empty:
                raise HTTPException(status_code=400,
                                    detail="refine requires at least one prompt")
            session.prompts.append(body.prompts)
            merged = _merge_prompts(session.prompts)
            manual = _convert_prompts(merged, session.record, preset.mask_prompt_size)
            result = _run(session.image, session.class_id, "semi", manual)
            payload = _prediction_payload(result, session.record, "semi", merged)
            session.history.append(payload)
            session.last_mask = result.gated_mask
            return {"prediction": payload, "step": len(session.history)}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        session = _get_session(session_id)
        return {
            "class_id": session.class_id,
            "accepted": session.accepted,
            "steps": len(session.history),
            "history": session.history,
        }

    @app.post("/sessions/{session_id}/accept")
    def accept(session_id: str):
        session = _get_session(session_id)
        with session.lock:
            if session.accepted:
                raise HTTPException(status_code=409, detail="session already accepted")
            session.accepted = True
            mask = mask_to_original(session.last_mask, session.record)
            buf = io.BytesIO()
            Image.fromarray((mask.numpy() * 255).astype("uint8"), mode="L").save(
                buf, format="PNG")
            return {
                "mask_png": base64.b64encode(buf.getvalue()).decode("ascii"),
                "metadata": {
                    "width": session.record.orig_w,
                    "height": session.record.orig_h,
                    "class_id": session.class_id,
                    "steps": len(session.history),
                },
            }

    return app


def serve(model: PromptSegmenter, port: int = 8000,
          session_ttl_seconds: float = 3600.0) -> None:
    import uvicorn

    app = create_app(model, session_ttl_seconds=session_ttl_seconds)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
