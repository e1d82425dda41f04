import { describe, expect, it } from "vitest";

import { maskArea, rleDecode, rleEncode } from "../src/rle.js";

describe("rle codec", () => {
  it("round-trips random masks", () => {
    let seed = 12345;
    const rand = () => {
      seed = (seed * 1103515245 + 12345) % 2 ** 31;
      return seed / 2 ** 31;
    };
    for (let trial = 0; trial < 30; trial++) {
      const h = 1 + Math.floor(rand() * 30);
      const w = 1 + Math.floor(rand() * 30);
      const mask = new Uint8Array(h * w);
      for (let i = 0; i < mask.length; i++) mask[i] = rand() > 0.5 ? 1 : 0;
      const rle = rleEncode(mask, h, w);
      expect(Array.from(rleDecode(rle))).toEqual(Array.from(mask));
    }
  });

  it("starts counts with a zero run", () => {
    const rle = rleEncode(new Uint8Array([1, 1, 0, 0]), 1, 4);
    expect(rle.counts).toEqual([0, 2, 2]);
  });

  it("handles all-zero and all-one masks", () => {
    expect(rleEncode(new Uint8Array(6), 2, 3).counts).toEqual([6]);
    expect(rleEncode(new Uint8Array(6).fill(1), 2, 3).counts).toEqual([0, 6]);
  });

  it("rejects count sums that do not match the size", () => {
    expect(() => rleDecode({ size: [2, 2], counts: [3] })).toThrow();
  });

  it("computes foreground area from counts", () => {
    const mask = new Uint8Array([0, 1, 1, 0, 1, 0]);
    expect(maskArea(rleEncode(mask, 1, 6))).toBe(3);
  });
});
