/**
 * Mask overlay pixels: RLE mask -> semi-transparent RGBA buffer.
 * Pure byte manipulation so it is testable without a canvas context.
 */

import { type Rle, rleDecode } from "./rle.js";

export const OVERLAY_RGBA: [number, number, number, number] = [66, 135, 245, 110];

export function overlayPixels(rle: Rle,
                              color: [number, number, number, number] = OVERLAY_RGBA
                              ): Uint8ClampedArray<ArrayBuffer> {
  const mask = rleDecode(rle);
  const out = new Uint8ClampedArray(new ArrayBuffer(mask.length * 4));
  for (let i = 0; i < mask.length; i++) {
    if (mask[i]) {
      const o = i * 4;
      out[o] = color[0];
      out[o + 1] = color[1];
      out[o + 2] = color[2];
      out[o + 3] = color[3];
    }
  }
  return out;
}

export function objectnessBadge(present: boolean): string {
  return present ? "object found" : "no object found";
}
