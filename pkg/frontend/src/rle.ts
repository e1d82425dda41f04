/**
 * Run-length codec matching the service wire format: counts are run lengths
 * of alternating 0s and 1s over the row-major mask, starting with zeros.
 */

export interface Rle {
  size: [number, number]; // [height, width]
  counts: number[];
}

export function rleEncode(mask: Uint8Array, height: number, width: number): Rle {
  if (mask.length !== height * width) {
    throw new Error(`mask length ${mask.length} != ${height}x${width}`);
  }
  const counts: number[] = [];
  let value = 0;
  let run = 0;
  for (let i = 0; i < mask.length; i++) {
    const v = mask[i] ? 1 : 0;
    if (v === value) {
      run++;
    } else {
      counts.push(run);
      value = v;
      run = 1;
    }
  }
  counts.push(run);
  return { size: [height, width], counts };
}

export function rleDecode(rle: Rle): Uint8Array {
  const [height, width] = rle.size;
  const total = height * width;
  const out = new Uint8Array(total);
  let pos = 0;
  let value = 0;
  for (const run of rle.counts) {
    if (run < 0) throw new Error("RLE counts must be non-negative");
    if (value) out.fill(1, pos, pos + run);
    pos += run;
    value = 1 - value;
  }
  if (pos !== total) {
    throw new Error(`RLE counts sum to ${pos}, expected ${total}`);
  }
  return out;
}

export function maskArea(rle: Rle): number {
  let area = 0;
  for (let i = 1; i < rle.counts.length; i += 2) area += rle.counts[i];
  return area;
}
