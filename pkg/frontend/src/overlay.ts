// Pure overlay compositing over RGBA buffers. The canvas adapter only
// copies the result into an ImageData, which keeps every rendering rule
// testable without a browser.

export interface Rgb {
  r: number;
  g: number;
  b: number;
}

export const WORKING_MASK_COLOR: Rgb = { r: 0, g: 200, b: 80 }; // green
export const WORKING_MASK_ALPHA = 0.45;
export const UNCERTAINTY_ALPHA = 0.6;

// Per-label colors for committed masks, cycled in commit order.
export const COMMITTED_COLORS: Rgb[] = [
  { r: 235, g: 100, b: 40 },
  { r: 70, g: 130, b: 235 },
  { r: 190, g: 70, b: 200 },
  { r: 240, g: 200, b: 40 },
  { r: 60, g: 200, b: 200 },
];

export function grayToRgba(gray: Uint8Array, width: number, height: number): Uint8ClampedArray {
  const out = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    const v = gray[i];
    out[i * 4] = v;
    out[i * 4 + 1] = v;
    out[i * 4 + 2] = v;
    out[i * 4 + 3] = 255;
  }
  return out;
}

// Alpha-tint the pixels where the mask bit is set; returns how many pixels
// were tinted.
export function tintMask(
  image: Uint8ClampedArray,
  bits: Uint8Array,
  color: Rgb,
  alpha: number,
): number {
  let tinted = 0;
  const n = Math.min(bits.length, image.length / 4);
  for (let i = 0; i < n; i++) {
    if (!bits[i]) continue;
    image[i * 4] = Math.round((1 - alpha) * image[i * 4] + alpha * color.r);
    image[i * 4 + 1] = Math.round((1 - alpha) * image[i * 4 + 1] + alpha * color.g);
    image[i * 4 + 2] = Math.round((1 - alpha) * image[i * 4 + 2] + alpha * color.b);
    tinted++;
  }
  return tinted;
}

// Heat ramp where lighter means more uncertain; zero maps to black.
export function heatColor(value: number): Rgb {
  if (value < 85) return { r: value * 3, g: 0, b: 0 };
  if (value < 170) return { r: 255, g: (value - 85) * 3, b: 0 };
  return { r: 255, g: 255, b: (value - 170) * 3 };
}

export function uncertaintyLayer(bytes: Uint8Array, width: number, height: number): Uint8ClampedArray {
  const out = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    const { r, g, b } = heatColor(bytes[i]);
    out[i * 4] = r;
    out[i * 4 + 1] = g;
    out[i * 4 + 2] = b;
    out[i * 4 + 3] = 255;
  }
  return out;
}

export function blendLayer(image: Uint8ClampedArray, layer: Uint8ClampedArray, alpha: number): void {
  for (let i = 0; i < image.length; i += 4) {
    image[i] = Math.round((1 - alpha) * image[i] + alpha * layer[i]);
    image[i + 1] = Math.round((1 - alpha) * image[i + 1] + alpha * layer[i + 1]);
    image[i + 2] = Math.round((1 - alpha) * image[i + 2] + alpha * layer[i + 2]);
  }
}

export interface CompositeInput {
  baseGray: Uint8Array;
  width: number;
  height: number;
  workingBits: Uint8Array | null;
  committed: { bits: Uint8Array; colorIndex: number }[];
  uncertaintyBytes: Uint8Array | null;
  showWorking: boolean;
  showCommitted: boolean;
  showUncertainty: boolean;
}

export interface CompositeResult {
  image: Uint8ClampedArray;
  tintedPixels: number;
}

export function compositeSlice(input: CompositeInput): CompositeResult {
  const image = grayToRgba(input.baseGray, input.width, input.height);
  let tinted = 0;
  if (input.showUncertainty && input.uncertaintyBytes) {
    const layer = uncertaintyLayer(input.uncertaintyBytes, input.width, input.height);
    blendLayer(image, layer, UNCERTAINTY_ALPHA);
  }
  if (input.showCommitted) {
    for (const mask of input.committed) {
      const color = COMMITTED_COLORS[mask.colorIndex % COMMITTED_COLORS.length];
      tinted += tintMask(image, mask.bits, color, WORKING_MASK_ALPHA);
    }
  }
  if (input.showWorking && input.workingBits) {
    tinted += tintMask(image, input.workingBits, WORKING_MASK_COLOR, WORKING_MASK_ALPHA);
  }
  return { image, tintedPixels: tinted };
}
