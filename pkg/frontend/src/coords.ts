/**
 * Display <-> original-image coordinate mapping.
 *
 * The image is drawn letterboxed into the canvas; every prompt is stored
 * and submitted in original image pixels, so a click survives the round
 * trip display -> original -> display within one display pixel.
 */

export interface ViewTransform {
  scale: number; // display pixels per original pixel
  offsetX: number;
  offsetY: number;
}

export function fitTransform(imageW: number, imageH: number,
                             canvasW: number, canvasH: number): ViewTransform {
  const scale = Math.min(canvasW / imageW, canvasH / imageH);
  return {
    scale,
    offsetX: (canvasW - imageW * scale) / 2,
    offsetY: (canvasH - imageH * scale) / 2,
  };
}

export function displayToOriginal(x: number, y: number, t: ViewTransform) {
  return { x: (x - t.offsetX) / t.scale, y: (y - t.offsetY) / t.scale };
}

export function originalToDisplay(x: number, y: number, t: ViewTransform) {
  return { x: x * t.scale + t.offsetX, y: y * t.scale + t.offsetY };
}

export function clampToImage(x: number, y: number, imageW: number, imageH: number) {
  return {
    x: Math.min(Math.max(x, 0), imageW),
    y: Math.min(Math.max(y, 0), imageH),
  };
}

export function insideImage(x: number, y: number, imageW: number, imageH: number): boolean {
  return x >= 0 && y >= 0 && x <= imageW && y <= imageH;
}
