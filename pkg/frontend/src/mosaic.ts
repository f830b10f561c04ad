/**
 * Five-tile camera mosaic: RGB tiles with a translucent mask tint,
 * upscaled nearest-neighbor so the operator sees exactly the 88x72 pixels
 * the network sees.  The RGBA composition is a pure function so it can be
 * tested without a canvas.
 */

import {
  IMAGE_HEIGHT,
  IMAGE_WIDTH,
  TILE_STATUS_CORRUPT,
  unpackMask,
  type FrameTile,
} from "./protocol.js";

export const TINT_RGB: [number, number, number] = [64, 220, 96];
export const TINT_ALPHA = 0.45;

/** Compose one tile into straight RGBA bytes (88*72*4). */
export function tileToRgba(tile: FrameTile): Uint8ClampedArray<ArrayBuffer> {
  const mask = unpackMask(tile.mask);
  const out = new Uint8ClampedArray(new ArrayBuffer(IMAGE_WIDTH * IMAGE_HEIGHT * 4));
  for (let p = 0; p < IMAGE_WIDTH * IMAGE_HEIGHT; p++) {
    let r = tile.image[p * 3];
    let g = tile.image[p * 3 + 1];
    let b = tile.image[p * 3 + 2];
    if (mask[p]) {
      r = r * (1 - TINT_ALPHA) + TINT_RGB[0] * TINT_ALPHA;
      g = g * (1 - TINT_ALPHA) + TINT_RGB[1] * TINT_ALPHA;
      b = b * (1 - TINT_ALPHA) + TINT_RGB[2] * TINT_ALPHA;
    }
    out[p * 4] = r;
    out[p * 4 + 1] = g;
    out[p * 4 + 2] = b;
    out[p * 4 + 3] = 255;
  }
  return out;
}

export function tileCaption(tile: FrameTile): string {
  const name = `cam ${tile.cameraId}`;
  if (tile.status === TILE_STATUS_CORRUPT) return `${name} — corrupt`;
  if (tile.accuracy >= 0) return `${name} — acc ${(tile.accuracy * 100).toFixed(1)}%`;
  return name;
}

export function isCorrupt(tile: FrameTile): boolean {
  return tile.status === TILE_STATUS_CORRUPT;
}

/** Draw a tile into a canvas, nearest-neighbor upscaled. */
export function drawTile(canvas: HTMLCanvasElement, tile: FrameTile, scale: number): void {
  const ctx = canvas.getContext("2d");
  if (ctx === null) return;
  canvas.width = IMAGE_WIDTH * scale;
  canvas.height = IMAGE_HEIGHT * scale;
  const image = new ImageData(tileToRgba(tile), IMAGE_WIDTH, IMAGE_HEIGHT);
  const off = new OffscreenCanvas(IMAGE_WIDTH, IMAGE_HEIGHT);
  const offCtx = off.getContext("2d");
  if (offCtx === null) return;
  offCtx.putImageData(image, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
  if (isCorrupt(tile)) {
    ctx.strokeStyle = "#e03131";
    ctx.lineWidth = 4;
    ctx.strokeRect(2, 2, canvas.width - 4, canvas.height - 4);
  }
}
