/**
 * Candidate overlay rendering: the selected mask as a translucent tint over
 * the photo, plus +/- markers at the click positions.
 */

import { ClickView } from "./api.js";
import { imageToDisplay } from "./coords.js";

/** Tint for selected-candidate pixels; alpha 128 is the 50% overlay. */
export const OVERLAY_TINT: readonly [number, number, number, number] = [66, 135, 245, 128];

/** RGBA buffer (width * height * 4) with the tint on set bits, clear elsewhere. */
export function buildOverlayRgba(
  bits: Uint8Array,
  width: number,
  height: number,
  tint: readonly [number, number, number, number] = OVERLAY_TINT,
): Uint8ClampedArray {
  if (bits.length !== width * height) {
    throw new Error(`bit count ${bits.length} does not match ${width}x${height}`);
  }
  const rgba = new Uint8ClampedArray(width * height * 4);
  const [r, g, b, a] = tint;
  for (let i = 0; i < bits.length; i++) {
    if (bits[i]) {
      const o = i * 4;
      rgba[o] = r;
      rgba[o + 1] = g;
      rgba[o + 2] = b;
      rgba[o + 3] = a;
    }
  }
  return rgba;
}

export interface ClickMarker {
  displayX: number;
  displayY: number;
  symbol: "+" | "-";
  polarity: "include" | "exclude";
}

/** Marker positions in display coordinates for every click so far. */
export function markersFor(
  clicks: ClickView[],
  displayWidth: number,
  displayHeight: number,
  imageWidth: number,
  imageHeight: number,
): ClickMarker[] {
  return clicks.map((click) => {
    const point = imageToDisplay(click.x, click.y, displayWidth, displayHeight, imageWidth, imageHeight);
    return {
      displayX: point.x,
      displayY: point.y,
      symbol: click.polarity === "include" ? "+" : "-",
      polarity: click.polarity,
    };
  });
}

/** Paint the overlay onto a canvas sized to the image (no-op without 2d). */
export function renderOverlayToCanvas(
  canvas: HTMLCanvasElement,
  bits: Uint8Array | null,
  width: number,
  height: number,
): void {
  canvas.width = width;
  canvas.height = height;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, width, height);
  if (!bits) return;
  const image = ctx.createImageData(width, height);
  image.data.set(buildOverlayRgba(bits, width, height));
  ctx.putImageData(image, 0, 0);
}
