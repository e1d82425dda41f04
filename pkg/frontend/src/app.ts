/**
 * Canvas annotation app: wires the API client and annotation state to the DOM.
 *
 * All rendering is guarded so the interaction logic (clicks, drags, the
 * label-refine-accept loop) also runs in a headless DOM without a 2d
 * context, which is how the scripted tests drive it.
 */

import { ApiClient, ApiError, type AnnotatorApi, type Prediction } from "./api.js";
import { clampToImage, displayToOriginal, fitTransform, insideImage, originalToDisplay, type ViewTransform } from "./coords.js";
import { objectnessBadge, overlayPixels } from "./overlay.js";
import { AnnotationState, type Tool } from "./state.js";

export interface AppElements {
  canvas: HTMLCanvasElement;
  refineButton: HTMLButtonElement;
  acceptButton: HTMLButtonElement;
  undoButton: HTMLButtonElement;
  banner: HTMLElement;
  badge: HTMLElement;
  historyPanel: HTMLElement;
}

const BRUSH_RADIUS_DISPLAY = 8; // display pixels

export class AnnotationApp {
  readonly state = new AnnotationState();
  view: ViewTransform = { scale: 1, offsetX: 0, offsetY: 0 };
  private image: HTMLImageElement | null = null;
  private imageSize: { w: number; h: number } | null = null;
  private dragStart: { x: number; y: number } | null = null;
  private activeStrokePoints: { x: number; y: number }[] | null = null;
  private lastPrediction: Prediction | null = null;

  constructor(private api: AnnotatorApi, private elements: AppElements) {
    const { canvas, refineButton, acceptButton, undoButton } = elements;
    canvas.addEventListener("pointerdown", (e) => this.onPointerDown(e));
    canvas.addEventListener("pointermove", (e) => this.onPointerMove(e));
    canvas.addEventListener("pointerup", (e) => this.onPointerUp(e));
    refineButton.addEventListener("click", () => void this.refine());
    acceptButton.addEventListener("click", () => void this.acceptAndExport());
    undoButton.addEventListener("click", () => {
      this.state.undo();
      this.render();
    });
    this.syncControls();
  }

  setTool(tool: Tool): void {
    this.state.tool = tool;
  }

  // ------------------------------------------------------------- lifecycle
  async startSession(file: Blob, classId = 0): Promise<void> {
    this.clearBanner();
    this.state.busy = true;
    this.syncControls();
    try {
      const b64 = await blobToBase64(file);
      const created = await this.api.createSession(b64, classId);
      this.state.startSession(created.session_id, created.geometry,
                              created.prediction);
      this.imageSize = { w: created.geometry.width, h: created.geometry.height };
      this.lastPrediction = created.prediction;
      await this.loadImage(file);
      this.fitView();
      this.render();
    } catch (error) {
      this.showBanner(describeError(error), true);
    } finally {
      this.state.busy = false;
      this.syncControls();
    }
  }

  async refine(): Promise<void> {
    if (!this.state.canRefine || !this.state.sessionId) return;
    this.clearBanner();
    this.state.busy = true;
    this.syncControls();
    const payload = this.state.buildDeltaPayload();
    try {
      const { prediction } = await this.api.refine(this.state.sessionId, payload);
      this.state.recordRefine(prediction, payload);
      this.lastPrediction = prediction;
      this.render();
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.state.markAccepted();
      }
      this.showBanner(describeError(error), true);
    } finally {
      this.state.busy = false;
      this.syncControls();
    }
  }

  async acceptAndExport(): Promise<string | null> {
    if (!this.state.canAccept || !this.state.sessionId) return null;
    this.clearBanner();
    this.state.busy = true;
    this.syncControls();
    try {
      const accepted = await this.api.accept(this.state.sessionId);
      this.state.markAccepted();
      this.downloadMask(accepted.mask_png);
      return accepted.mask_png;
    } catch (error) {
      // network failure: session stays open for a retry
      this.showBanner(describeError(error), true);
      return null;
    } finally {
      this.state.busy = false;
      this.syncControls();
    }
  }

  // ------------------------------------------------------------- pointers
  onPointerDown(event: { clientX: number; clientY: number }): void {
    if (!this.state.sessionId || this.state.accepted || !this.imageSize) return;
    const p = this.toOriginal(event);
    const tool = this.state.tool;
    if (tool === "point_fg" || tool === "point_bg") {
      if (!insideImage(p.x, p.y, this.imageSize.w, this.imageSize.h)) return;
      this.state.addPoint({ x: p.x, y: p.y, label: tool === "point_fg" ? 1 : 0 });
      this.render();
    } else if (tool === "box") {
      this.dragStart = p;
    } else {
      this.activeStrokePoints = [clampToImage(p.x, p.y, this.imageSize.w, this.imageSize.h)];
    }
    this.syncControls();
  }

  onPointerMove(event: { clientX: number; clientY: number }): void {
    if (this.activeStrokePoints && this.imageSize) {
      const p = this.toOriginal(event);
      this.activeStrokePoints.push(
        clampToImage(p.x, p.y, this.imageSize.w, this.imageSize.h));
    }
  }

  onPointerUp(event: { clientX: number; clientY: number }): void {
    if (!this.imageSize) return;
    if (this.dragStart) {
      const a = this.dragStart;
      const b = this.toOriginal(event);
      this.dragStart = null;
      const x1 = Math.min(a.x, b.x), x2 = Math.max(a.x, b.x);
      const y1 = Math.min(a.y, b.y), y2 = Math.max(a.y, b.y);
      if (x2 - x1 >= 1 && y2 - y1 >= 1) {
        const lo = clampToImage(x1, y1, this.imageSize.w, this.imageSize.h);
        const hi = clampToImage(x2, y2, this.imageSize.w, this.imageSize.h);
        this.state.addBox({ x1: lo.x, y1: lo.y, x2: hi.x, y2: hi.y });
      }
    } else if (this.activeStrokePoints) {
      const points = this.activeStrokePoints;
      this.activeStrokePoints = null;
      this.state.addStroke({
        points,
        radius: BRUSH_RADIUS_DISPLAY / this.view.scale,
        erase: this.state.tool === "erase",
      });
    }
    this.render();
    this.syncControls();
  }

  toOriginal(event: { clientX: number; clientY: number }): { x: number; y: number } {
    const rect = this.elements.canvas.getBoundingClientRect();
    return displayToOriginal(event.clientX - rect.left, event.clientY - rect.top,
                             this.view);
  }

  // ------------------------------------------------------------- rendering
  fitView(): void {
    if (!this.imageSize) return;
    this.view = fitTransform(this.imageSize.w, this.imageSize.h,
                             this.elements.canvas.width, this.elements.canvas.height);
  }

  render(): void {
    this.renderHistory();
    this.renderBadge();
    const ctx = getContext(this.elements.canvas);
    if (!ctx || !this.imageSize) return;
    const { canvas } = this.elements;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    if (this.image) {
      ctx.drawImage(this.image, this.view.offsetX, this.view.offsetY,
                    this.imageSize.w * this.view.scale,
                    this.imageSize.h * this.view.scale);
    }
    if (this.lastPrediction) this.drawOverlay(ctx, this.lastPrediction);
    this.drawPending(ctx);
  }

  private drawOverlay(ctx: CanvasRenderingContext2D, prediction: Prediction): void {
    const [h, w] = prediction.mask_rle.size;
    const pixels = overlayPixels(prediction.mask_rle);
    const off = document.createElement("canvas");
    off.width = w;
    off.height = h;
    const offCtx = getContext(off);
    if (!offCtx) return;
    offCtx.putImageData(new ImageData(pixels, w, h), 0, 0);
    ctx.drawImage(off, this.view.offsetX, this.view.offsetY,
                  w * this.view.scale, h * this.view.scale);
  }

  private drawPending(ctx: CanvasRenderingContext2D): void {
    ctx.lineWidth = 2;
    for (const box of this.state.pendingBoxes) {
      const a = originalToDisplay(box.x1, box.y1, this.view);
      const b = originalToDisplay(box.x2, box.y2, this.view);
      ctx.strokeStyle = "#ffb020";
      ctx.strokeRect(a.x, a.y, b.x - a.x, b.y - a.y);
    }
    for (const point of this.state.pendingPoints) {
      const p = originalToDisplay(point.x, point.y, this.view);
      ctx.fillStyle = point.label === 1 ? "#27c93f" : "#ff5f57";
      ctx.beginPath();
      ctx.arc(p.x, p.y, 4, 0, 2 * Math.PI);
      ctx.fill();
    }
    ctx.strokeStyle = "#9b59ff";
    for (const stroke of this.state.pendingStrokes) {
      ctx.beginPath();
      stroke.points.forEach((pt, i) => {
        const p = originalToDisplay(pt.x, pt.y, this.view);
        if (i === 0) ctx.moveTo(p.x, p.y);
        else ctx.lineTo(p.x, p.y);
      });
      ctx.stroke();
    }
  }

  private renderBadge(): void {
    if (this.lastPrediction) {
      this.elements.badge.textContent = objectnessBadge(
        this.lastPrediction.object_present);
    } else {
      this.elements.badge.textContent = "";
    }
  }

  private renderHistory(): void {
    const panel = this.elements.historyPanel;
    panel.textContent = "";
    this.state.history.forEach((step, i) => {
      const entry = document.createElement("div");
      const n = step.submitted
        ? step.submitted.points.length + step.submitted.boxes.length
        : 0;
      entry.textContent = `step ${i + 1}: ${step.prediction.mode}` +
        (step.submitted ? ` (+${n} prompts)` : "");
      entry.className = "history-entry";
      panel.appendChild(entry);
    });
  }

  syncControls(): void {
    this.elements.refineButton.disabled = !this.state.canRefine;
    this.elements.acceptButton.disabled = !this.state.canAccept;
    this.elements.undoButton.disabled = !this.state.hasPending || this.state.accepted;
  }

  private downloadMask(pngB64: string): void {
    try {
      const anchor = document.createElement("a");
      anchor.href = `data:image/png;base64,${pngB64}`;
      anchor.download = "mask.png";
      anchor.click();
    } catch {
      // headless DOM: the caller still receives the PNG bytes
    }
  }

  private showBanner(message: string, retryable: boolean): void {
    this.elements.banner.textContent = retryable ? `${message} (retry)` : message;
    this.elements.banner.classList.add("visible");
  }

  private clearBanner(): void {
    this.elements.banner.textContent = "";
    this.elements.banner.classList.remove("visible");
  }

  private loadImage(file: Blob): Promise<void> {
    return new Promise((resolve) => {
      if (typeof Image === "undefined" || typeof URL.createObjectURL !== "function") {
        resolve(); // headless DOM: interaction still works without pixels
        return;
      }
      const img = new Image();
      img.onload = () => {
        this.image = img;
        resolve();
      };
      img.onerror = () => resolve();
      img.src = URL.createObjectURL(file);
    });
  }
}

function getContext(canvas: HTMLCanvasElement): CanvasRenderingContext2D | null {
  try {
    return canvas.getContext("2d");
  } catch {
    return null;
  }
}

function describeError(error: unknown): string {
  if (error instanceof ApiError) return `server error ${error.status}: ${error.message}`;
  if (error instanceof Error) return error.message;
  return String(error);
}

async function blobToBase64(blob: Blob): Promise<string> {
  const buffer = await blob.arrayBuffer();
  const bytes = new Uint8Array(buffer);
  let binary = "";
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(binary);
}

export function bootstrap(baseUrl: string, elements: AppElements,
                          fileInput: HTMLInputElement,
                          toolSelect: HTMLSelectElement): AnnotationApp {
  const app = new AnnotationApp(new ApiClient(baseUrl), elements);
  fileInput.addEventListener("change", () => {
    const file = fileInput.files?.[0];
    if (file) void app.startSession(file);
  });
  toolSelect.addEventListener("change", () => {
    app.setTool(toolSelect.value as Tool);
  });
  return app;
}
