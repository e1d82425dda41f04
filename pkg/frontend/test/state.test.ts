import { describe, expect, it } from "vitest";

import type { Prediction, SessionGeometry } from "../src/api.js";
import { AnnotationState } from "../src/state.js";

const geometry: SessionGeometry = {
  input_size: 256,
  mask_prompt_size: 64,
  scale: 256 / 300,
  content_w: 256,
  content_h: 256,
  width: 300,
  height: 300,
};

function prediction(mode = "auto"): Prediction {
  return {
    mask_rle: { size: [300, 300], counts: [300 * 300] },
    object_present: true,
    objectness_logit: 1.0,
    mode,
    gated: mode !== "manual",
    width: 300,
    height: 300,
    echo: { points: [], boxes: [] },
  };
}

function started(): AnnotationState {
  const state = new AnnotationState();
  state.startSession("sid", geometry, prediction());
  return state;
}

describe("annotation state", () => {
  it("records the initial auto prediction as step 1", () => {
    const state = started();
    expect(state.history).toHaveLength(1);
    expect(state.history[0].submitted).toBeNull();
    expect(state.canRefine).toBe(false); // no pending prompts yet
  });

  it("refine is enabled only with pending prompts", () => {
    const state = started();
    expect(state.canRefine).toBe(false);
    state.addPoint({ x: 10, y: 20, label: 1 });
    expect(state.canRefine).toBe(true);
  });

  it("undo pops pending prompts only, history is immutable", () => {
    const state = started();
    state.addPoint({ x: 10, y: 20, label: 1 });
    state.recordRefine(prediction("semi"), state.buildDeltaPayload());
    expect(state.history).toHaveLength(2);
    state.addBox({ x1: 1, y1: 2, x2: 30, y2: 40 });
    expect(state.undo()).toBe(true);
    expect(state.pendingBoxes).toHaveLength(0);
    expect(state.history).toHaveLength(2); // untouched
    expect(state.undo()).toBe(false); // nothing pending; history stays
    expect(state.history).toHaveLength(2);
  });

  it("cumulative payload includes every committed prompt", () => {
    const state = started();
    state.addPoint({ x: 10, y: 20, label: 1 });
    state.recordRefine(prediction("semi"), state.buildDeltaPayload());
    state.addBox({ x1: 5, y1: 6, x2: 50, y2: 60 });
    const payload = state.buildRefinePayload();
    expect(payload.points).toHaveLength(1);
    expect(payload.boxes).toHaveLength(1);
  });

  it("delta payload carries only new prompts", () => {
    const state = started();
    state.addPoint({ x: 10, y: 20, label: 1 });
    state.recordRefine(prediction("semi"), state.buildDeltaPayload());
    state.addPoint({ x: 99, y: 100, label: 0 });
    const payload = state.buildDeltaPayload();
    expect(payload.points).toHaveLength(1);
    expect(payload.points[0].x).toBe(99);
  });

  it("accepting freezes editing", () => {
    const state = started();
    state.markAccepted();
    expect(state.canRefine).toBe(false);
    expect(state.canAccept).toBe(false);
    expect(() => state.addPoint({ x: 1, y: 1, label: 1 })).toThrow();
  });

  it("rejects unordered boxes", () => {
    const state = started();
    expect(() => state.addBox({ x1: 50, y1: 5, x2: 10, y2: 60 })).toThrow();
  });

  it("reset clears everything for a fresh canvas", () => {
    const state = started();
    state.addPoint({ x: 1, y: 1, label: 1 });
    state.reset();
    expect(state.sessionId).toBeNull();
    expect(state.history).toHaveLength(0);
    expect(state.hasPending).toBe(false);
  });
});
