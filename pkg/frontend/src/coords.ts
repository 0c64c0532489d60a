/**
 * Display <-> image pixel mapping. Clicks land on CSS pixels of the scaled
 * <img>/<canvas>; the server wants image pixel indices. Display-to-image
 * rounds half DOWN and clamps, so a click can never be out of bounds.
 */

export interface PixelPoint {
  x: number;
  y: number;
}

function roundHalfDown(value: number): number {
  return Math.ceil(value - 0.5);
}

function clamp(value: number, max: number): number {
  return Math.min(Math.max(value, 0), max);
}

/**
 * Map a point in display coordinates onto an image pixel index: the pixel
 * containing the click, with clicks exactly on a pixel boundary (a half,
 * measured from pixel centers) rounding down to the lower pixel.
 */
export function displayToImage(
  dx: number,
  dy: number,
  displayWidth: number,
  displayHeight: number,
  imageWidth: number,
  imageHeight: number,
): PixelPoint {
  const scaleX = imageWidth / displayWidth;
  const scaleY = imageHeight / displayHeight;
  const x = roundHalfDown(dx * scaleX - 0.5);
  const y = roundHalfDown(dy * scaleY - 0.5);
  return { x: clamp(x, imageWidth - 1), y: clamp(y, imageHeight - 1) };
}

/** Center of an image pixel in display coordinates; inverse of the above. */
export function imageToDisplay(
  x: number,
  y: number,
  displayWidth: number,
  displayHeight: number,
  imageWidth: number,
  imageHeight: number,
): PixelPoint {
  return {
    x: ((x + 0.5) * displayWidth) / imageWidth,
    y: ((y + 0.5) * displayHeight) / imageHeight,
  };
}
