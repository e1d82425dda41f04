/**
 * Annotation session state: pending prompts, submitted history, lifecycle.
 *
 * Pending prompts are editable (undo pops the most recent one); once a
 * refine round trips, they move into the read-only history. Refinement
 * n+1 always resubmits everything accumulated through step n, matching
 * the service's cumulative-prompt contract.
 */

import type { BoxPrompt, PointPrompt, Prediction, PromptsPayload, SessionGeometry } from "./api.js";
import { type BrushStroke, strokesToRle } from "./brush.js";

export type Tool = "point_fg" | "point_bg" | "box" | "brush" | "erase";

export interface StepRecord {
  prediction: Prediction;
  submitted: PromptsPayload | null; // null for the initial auto prediction
}

type PendingItem =
  | { kind: "point"; value: PointPrompt }
  | { kind: "box"; value: BoxPrompt }
  | { kind: "stroke"; value: BrushStroke };

export class AnnotationState {
  tool: Tool = "point_fg";
  sessionId: string | null = null;
  geometry: SessionGeometry | null = null;
  accepted = false;
  busy = false;
  readonly history: StepRecord[] = [];
  private pending: PendingItem[] = [];
  private committedPoints: PointPrompt[] = [];
  private committedBoxes: BoxPrompt[] = [];
  private committedStrokes: BrushStroke[] = [];

  startSession(sessionId: string, geometry: SessionGeometry,
               initial: Prediction): void {
    this.sessionId = sessionId;
    this.geometry = geometry;
    this.accepted = false;
    this.pending = [];
    this.committedPoints = [];
    this.committedBoxes = [];
    this.committedStrokes = [];
    this.history.length = 0;
    this.history.push({ prediction: initial, submitted: null });
  }

  get pendingPoints(): PointPrompt[] {
    return this.pending.filter((p) => p.kind === "point")
      .map((p) => (p as { kind: "point"; value: PointPrompt }).value);
  }

  get pendingBoxes(): BoxPrompt[] {
    return this.pending.filter((p) => p.kind === "box")
      .map((p) => (p as { kind: "box"; value: BoxPrompt }).value);
  }

  get pendingStrokes(): BrushStroke[] {
    return this.pending.filter((p) => p.kind === "stroke")
      .map((p) => (p as { kind: "stroke"; value: BrushStroke }).value);
  }

  get hasPending(): boolean {
    return this.pending.length > 0;
  }

  get canRefine(): boolean {
    return this.sessionId !== null && !this.accepted && !this.busy && this.hasPending;
  }

  get canAccept(): boolean {
    return this.sessionId !== null && !this.accepted && !this.busy;
  }

  addPoint(point: PointPrompt): void {
    this.ensureEditable();
    this.pending.push({ kind: "point", value: point });
  }

  addBox(box: BoxPrompt): void {
    this.ensureEditable();
    if (box.x2 <= box.x1 || box.y2 <= box.y1) {
      throw new Error("box corners must be ordered");
    }
    this.pending.push({ kind: "box", value: box });
  }

  addStroke(stroke: BrushStroke): void {
    this.ensureEditable();
    this.pending.push({ kind: "stroke", value: stroke });
  }

  /** Undo applies to pending prompts only, never to submitted history. */
  undo(): boolean {
    return this.pending.pop() !== undefined;
  }

  /** Cumulative prompts for the next refine (history plus pending). */
  buildRefinePayload(): PromptsPayload {
    if (!this.geometry) throw new Error("no active session");
    const points = [...this.committedPoints, ...this.pendingPoints];
    const boxes = [...this.committedBoxes, ...this.pendingBoxes];
    const strokes = [...this.committedStrokes, ...this.pendingStrokes];
    const payload: PromptsPayload = { points, boxes };
    const brush = strokesToRle(strokes, this.geometry);
    if (brush) payload.brush_mask = brush;
    return payload;
  }

  /** New prompts only; the server accumulates per its session contract. */
  buildDeltaPayload(): PromptsPayload {
    if (!this.geometry) throw new Error("no active session");
    const payload: PromptsPayload = {
      points: this.pendingPoints,
      boxes: this.pendingBoxes,
    };
    const strokes = [...this.committedStrokes, ...this.pendingStrokes];
    const brush = strokesToRle(strokes, this.geometry);
    if (brush) payload.brush_mask = brush;
    return payload;
  }

  recordRefine(prediction: Prediction, submitted: PromptsPayload): void {
    this.committedPoints.push(...this.pendingPoints);
    this.committedBoxes.push(...this.pendingBoxes);
    this.committedStrokes.push(...this.pendingStrokes);
    this.pending = [];
    this.history.push({ prediction, submitted });
  }

  markAccepted(): void {
    this.accepted = true;
    this.pending = [];
  }

  reset(): void {
    this.sessionId = null;
    this.geometry = null;
    this.accepted = false;
    this.busy = false;
    this.pending = [];
    this.committedPoints = [];
    this.committedBoxes = [];
    this.committedStrokes = [];
    this.history.length = 0;
  }

  private ensureEditable(): void {
    if (this.accepted) throw new Error("session already accepted");
    if (!this.sessionId) throw new Error("no active session");
  }
}
