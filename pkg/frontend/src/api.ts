/**
 * Typed client for the segmentation service HTTP API.
 *
 * Prompt coordinates are original image pixels; masks travel run-length
 * encoded; the accepted mask arrives as a base64 PNG at original size.
 */

import type { Rle } from "./rle.js";

export interface PointPrompt {
  x: number;
  y: number;
  label: number; // 1 foreground, 0 background
}

export interface BoxPrompt {
  x1: number;
  y1: number;
  x2: number;
  y2: number;
}

export interface PromptsPayload {
  points: PointPrompt[];
  boxes: BoxPrompt[];
  brush_mask?: Rle;
}

export interface Prediction {
  mask_rle: Rle;
  object_present: boolean;
  objectness_logit: number;
  mode: string;
  gated: boolean;
  width: number;
  height: number;
  echo: { points: PointPrompt[]; boxes: BoxPrompt[] };
}

export interface SessionGeometry {
  input_size: number;
  mask_prompt_size: number;
  scale: number;
  content_w: number;
  content_h: number;
  width: number;
  height: number;
}

export interface SessionCreated {
  session_id: string;
  prediction: Prediction;
  geometry: SessionGeometry;
}

export interface AcceptResponse {
  mask_png: string; // base64
  metadata: { width: number; height: number; class_id: number; steps: number };
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

/** Surface the app consumes; ApiClient is the HTTP implementation. */
export interface AnnotatorApi {
  createSession(imageB64: string, classId?: number): Promise<SessionCreated>;
  refine(sessionId: string, prompts: PromptsPayload):
      Promise<{ prediction: Prediction; step: number }>;
  getSession(sessionId: string): Promise<{
    class_id: number; accepted: boolean; steps: number; history: Prediction[];
  }>;
  accept(sessionId: string): Promise<AcceptResponse>;
}

async function parseError(response: Response): Promise<never> {
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    // keep the status text
  }
  throw new ApiError(response.status, detail);
}

export class ApiClient implements AnnotatorApi {
  constructor(private baseUrl: string,
              private fetchImpl: typeof fetch = fetch.bind(globalThis)) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) await parseError(response);
    return (await response.json()) as T;
  }

  async createSession(imageB64: string, classId = 0): Promise<SessionCreated> {
    return this.post("/sessions", { image: imageB64, class_id: classId });
  }

  async refine(sessionId: string, prompts: PromptsPayload):
      Promise<{ prediction: Prediction; step: number }> {
    return this.post(`/sessions/${sessionId}/refine`, { prompts });
  }

  async getSession(sessionId: string): Promise<{
    class_id: number; accepted: boolean; steps: number; history: Prediction[];
  }> {
    const response = await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}`);
    if (!response.ok) await parseError(response);
    return await response.json();
  }

  async accept(sessionId: string): Promise<AcceptResponse> {
    return this.post(`/sessions/${sessionId}/accept`, {});
  }
}
