/**
 * Client-side brush rasterization.
 *
 * Strokes are captured in original image pixels and stamped into the
 * service's brush-mask grid: an SxS raster over the padded model canvas.
 * Erase strokes clear cells. The wire format stays one binary mask.
 */

import type { SessionGeometry } from "./api.js";
import { type Rle, rleEncode } from "./rle.js";

export interface StrokePoint {
  x: number;
  y: number;
}

export interface BrushStroke {
  points: StrokePoint[];
  radius: number; // in original image pixels
  erase: boolean;
}

export function rasterizeStrokes(strokes: BrushStroke[],
                                 geometry: SessionGeometry): Uint8Array {
  const size = geometry.mask_prompt_size;
  const grid = new Uint8Array(size * size);
  // original px -> padded canvas norm -> grid cells
  const toGrid = geometry.scale / geometry.input_size * size;
  for (const stroke of strokes) {
    const radius = Math.max(stroke.radius * toGrid, 0.5);
    const value = stroke.erase ? 0 : 1;
    for (const point of stroke.points) {
      const cx = point.x * toGrid;
      const cy = point.y * toGrid;
      const lo = Math.max(0, Math.floor(cy - radius));
      const hi = Math.min(size - 1, Math.ceil(cy + radius));
      for (let row = lo; row <= hi; row++) {
        const left = Math.max(0, Math.floor(cx - radius));
        const right = Math.min(size - 1, Math.ceil(cx + radius));
        for (let col = left; col <= right; col++) {
          const dx = col + 0.5 - cx;
          const dy = row + 0.5 - cy;
          if (dx * dx + dy * dy <= radius * radius) {
            grid[row * size + col] = value;
          }
        }
      }
    }
  }
  return grid;
}

export function strokesToRle(strokes: BrushStroke[],
                             geometry: SessionGeometry): Rle | undefined {
  const grid = rasterizeStrokes(strokes, geometry);
  if (!grid.some((v) => v)) return undefined;
  const size = geometry.mask_prompt_size;
  return rleEncode(grid, size, size);
}
