/**
 * Run-length mask codec matching the server's wire rule: counts alternate
 * values over the row-major scan starting with zeros, only the first count
 * may be zero, and counts sum to width * height.
 */

export class RleError extends Error {}

/** Decode runs into one byte per pixel (0 or 1), row-major. */
export function decodeRle(runs: number[], width: number, height: number): Uint8Array {
  if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
    throw new RleError(`invalid dimensions ${width}x${height}`);
  }
  let total = 0;
  for (let i = 0; i < runs.length; i++) {
    const count = runs[i]!;
    if (!Number.isInteger(count) || count < 0) {
      throw new RleError(`run at position ${i} is not a non-negative integer`);
    }
    if (count === 0 && i !== 0) {
      throw new RleError(`zero run at position ${i}`);
    }
    total += count;
  }
  if (total !== width * height) {
    throw new RleError(`runs sum to ${total}, expected ${width * height}`);
  }
  const bits = new Uint8Array(width * height);
  let offset = 0;
  let value = 0;
  for (const count of runs) {
    if (value === 1) bits.fill(1, offset, offset + count);
    offset += count;
    value ^= 1;
  }
  return bits;
}

/** Inverse of decodeRle; used for round-trip checks. */
export function encodeRle(bits: Uint8Array): number[] {
  if (bits.length === 0) throw new RleError("empty mask");
  const runs: number[] = [];
  let current = 0;
  let length = 0;
  for (const bit of bits) {
    const value = bit ? 1 : 0;
    if (value === current) {
      length += 1;
    } else {
      runs.push(length);
      current = value;
      length = 1;
    }
  }
  runs.push(length);
  return runs;
}

export function population(bits: Uint8Array): number {
  let count = 0;
  for (const bit of bits) count += bit;
  return count;
}
