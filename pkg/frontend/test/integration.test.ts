// @vitest-environment jsdom
/**
 * Full label-refine-accept loop against a live service instance.
 *
 * The suite boots the Python service on a scratch checkpoint, uploads a
 * generated test image through the app, refines with a clicked point and
 * accepts, asserting the exported mask PNG matches the original image
 * dimensions.
 */
import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { AnnotationApp, type AppElements } from "../src/app.js";
import { originalToDisplay } from "../src/coords.js";

const PORT = 8731;
const BASE = `http://127.0.0.1:${PORT}`;
const IMAGE_SIDE = 260;

let service: ChildProcess | null = null;
let imageBytes: Uint8Array;

function pngDimensions(bytes: Uint8Array): { width: number; height: number } {
  // IHDR: width at offset 16, height at 20, big-endian
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  return { width: view.getUint32(16), height: view.getUint32(20) };
}

async function waitForService(timeoutMs = 90_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${BASE}/sessions/warmup-probe`);
      if (response.status === 404) return; // routed -> service is up
    } catch {
      // not listening yet
    }
    await new Promise((resolve) => setTimeout(resolve, 500));
  }
  throw new Error("service did not become ready");
}

beforeAll(async () => {
  const scratch = mkdtempSync(join(tmpdir(), "annotator-it-"));
  const checkpoint = join(scratch, "svc.ntz");
  const imagePath = join(scratch, "img.png");
  const script = [
    "from promptseg.model import build_model",
    "from promptseg.checkpoint import save_model",
    "from promptseg.synth import synth_generate",
    "from PIL import Image",
    "import numpy as np",
    `save_model(r'${checkpoint}', build_model('desk', seed=0))`,
    `(s,) = synth_generate(seed=5, count=1, empty_fraction=0.0, size_range=(${IMAGE_SIDE}, ${IMAGE_SIDE}))`,
    "arr = (s.image.permute(1, 2, 0).numpy() * 255).astype('uint8')",
    `Image.fromarray(arr, 'RGB').save(r'${imagePath}')`,
  ].join("\n");
  execFileSync("python3", ["-c", script], { stdio: "inherit" });
  imageBytes = new Uint8Array(readFileSync(imagePath));

  service = spawn("python3", [
    "-m", "promptseg.cli", "serve",
    "--checkpoint", checkpoint,
    "--port", String(PORT),
  ], { stdio: "ignore" });
  await waitForService();
}, 120_000);

afterAll(() => {
  service?.kill();
});

function buildDom(): { app: AnnotationApp; elements: AppElements } {
  document.body.innerHTML = `
    <canvas id="c" width="1024" height="768"></canvas>
    <button id="refine"></button><button id="accept"></button>
    <button id="undo"></button>
    <div id="banner"></div><div id="badge"></div><div id="history"></div>`;
  const canvas = document.getElementById("c") as HTMLCanvasElement;
  canvas.getBoundingClientRect = () => ({
    left: 0, top: 0, right: 1024, bottom: 768, width: 1024, height: 768,
    x: 0, y: 0, toJSON: () => ({}),
  });
  const elements: AppElements = {
    canvas,
    refineButton: document.getElementById("refine") as HTMLButtonElement,
    acceptButton: document.getElementById("accept") as HTMLButtonElement,
    undoButton: document.getElementById("undo") as HTMLButtonElement,
    banner: document.getElementById("banner") as HTMLElement,
    badge: document.getElementById("badge") as HTMLElement,
    historyPanel: document.getElementById("history") as HTMLElement,
  };
  return { app: new AnnotationApp(new ApiClient(BASE), elements), elements };
}

describe("live service loop", () => {
  it("uploads, refines with a clicked point and exports the mask", async () => {
    const { app, elements } = buildDom();

    await app.startSession(new Blob([imageBytes], { type: "image/png" }));
    expect(elements.banner.textContent).toBe("");
    expect(app.state.sessionId).not.toBeNull();
    expect(app.state.history).toHaveLength(1);
    expect(app.state.geometry!.width).toBe(IMAGE_SIDE);
    expect(elements.historyPanel.children).toHaveLength(1);
    expect(elements.badge.textContent).toMatch(/object/);

    // click a known original point through the display transform
    const display = originalToDisplay(130, 140, app.view);
    elements.canvas.dispatchEvent(new MouseEvent("pointerdown", {
      clientX: display.x, clientY: display.y }));
    elements.canvas.dispatchEvent(new MouseEvent("pointerup", {
      clientX: display.x, clientY: display.y }));
    expect(app.state.pendingPoints).toHaveLength(1);
    expect(Math.abs(app.state.pendingPoints[0].x - 130)).toBeLessThanOrEqual(1);

    await app.refine();
    expect(elements.banner.textContent).toBe("");
    expect(app.state.history).toHaveLength(2);
    expect(app.state.hasPending).toBe(false);

    const maskB64 = await app.acceptAndExport();
    expect(maskB64).not.toBeNull();
    const png = Uint8Array.from(Buffer.from(maskB64!, "base64"));
    const dims = pngDimensions(png);
    expect(dims).toEqual({ width: IMAGE_SIDE, height: IMAGE_SIDE });
    expect(app.state.accepted).toBe(true);

    // refine after accept is blocked client-side
    expect(app.state.canRefine).toBe(false);
  }, 120_000);

  it("rejects refine-after-accept on the server too", async () => {
    const { app } = buildDom();
    await app.startSession(new Blob([imageBytes], { type: "image/png" }));
    const sessionId = app.state.sessionId!;
    await app.acceptAndExport();
    const response = await fetch(`${BASE}/sessions/${sessionId}/refine`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ prompts: { points: [{ x: 5, y: 5, label: 1 }], boxes: [] } }),
    });
    expect(response.status).toBe(409);
  }, 60_000);
});
