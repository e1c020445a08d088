/**
 * Data plumbing: JSON-lines manifests, 8-bit grayscale PNG slices/masks,
 * per-slice or per-volume min-max normalization, and the two augmentations
 * used for fine-tuning (color jitter, random resized crop).
 */

import * as fs from "node:fs";
import { PNG } from "pngjs";
import { Rng } from "./rng.js";

export interface ManifestEntry {
  patient_id: string;
  series_id: string;
  slice_index: number;
  image_path: string;
  mask_path?: string;
  feature_path?: string;
  class_label?: string;
}

export function loadManifest(path: string): ManifestEntry[] {
  const entries: ManifestEntry[] = [];
  for (const line of fs.readFileSync(path, "utf8").split("\n")) {
    const text = line.trim();
    if (!text) continue;
    const rec = JSON.parse(text);
    if (!("patient_id" in rec)) continue; // dataset_name header line
    entries.push(rec as ManifestEntry);
  }
  return entries;
}

export interface GrayImage {
  width: number;
  height: number;
  /** intensities in [0,1], row-major */
  pixels: Float64Array;
}

export function readGrayPng(path: string): GrayImage {
  const png = PNG.sync.read(fs.readFileSync(path));
  const pixels = new Float64Array(png.width * png.height);
  // pngjs expands every image to RGBA8; grayscale sources have R=G=B
  for (let i = 0; i < pixels.length; i++) pixels[i] = png.data[i * 4] / 255;
  return { width: png.width, height: png.height, pixels };
}

export function readMaskPng(path: string): Uint8Array {
  const png = PNG.sync.read(fs.readFileSync(path));
  const out = new Uint8Array(png.width * png.height);
  for (let i = 0; i < out.length; i++) out[i] = png.data[i * 4];
  return out;
}

export function minMaxNormalize(pixels: Float64Array): Float64Array {
  let lo = Infinity, hi = -Infinity;
  for (const v of pixels) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  const out = new Float64Array(pixels.length);
  if (hi > lo) {
    for (let i = 0; i < pixels.length; i++) out[i] = (pixels[i] - lo) / (hi - lo);
  }
  return out;
}

export interface Slice {
  entry: ManifestEntry;
  image: Float64Array;  // normalized [0,1], imageSize^2
  mask?: Uint8Array;
}

/** Load and normalize every manifest slice (slice_wise or volume_wise). */
export function loadDataset(entries: ManifestEntry[],
                            norm: "slice_wise" | "volume_wise"): Slice[] {
  const raw = entries.map((entry) => ({
    entry,
    img: readGrayPng(entry.image_path),
    mask: entry.mask_path ? readMaskPng(entry.mask_path) : undefined,
  }));
  if (norm === "slice_wise") {
    return raw.map(({ entry, img, mask }) => ({
      entry, image: minMaxNormalize(img.pixels), mask,
    }));
  }
  const byVolume = new Map<string, typeof raw>();
  for (const item of raw) {
    const key = `${item.entry.patient_id}/${item.entry.series_id}`;
    if (!byVolume.has(key)) byVolume.set(key, []);
    byVolume.get(key)!.push(item);
  }
  const out: Slice[] = [];
  for (const group of byVolume.values()) {
    let lo = Infinity, hi = -Infinity;
    for (const { img } of group) {
      for (const v of img.pixels) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
    }
    for (const { entry, img, mask } of group) {
      const image = new Float64Array(img.pixels.length);
      if (hi > lo) {
        for (let i = 0; i < image.length; i++) image[i] = (img.pixels[i] - lo) / (hi - lo);
      }
      out.push({ entry, image, mask });
    }
  }
  out.sort((a, b) =>
    a.entry.patient_id.localeCompare(b.entry.patient_id)
    || a.entry.series_id.localeCompare(b.entry.series_id)
    || a.entry.slice_index - b.entry.slice_index);
  return out;
}

export function bilinearResize(src: Float64Array, srcSize: number,
                               dstSize: number): Float64Array {
  const out = new Float64Array(dstSize * dstSize);
  const scale = srcSize / dstSize;
  for (let y = 0; y < dstSize; y++) {
    for (let x = 0; x < dstSize; x++) {
      const sy = Math.min((y + 0.5) * scale - 0.5, srcSize - 1);
      const sx = Math.min((x + 0.5) * scale - 0.5, srcSize - 1);
      const y0 = Math.max(0, Math.floor(sy));
      const x0 = Math.max(0, Math.floor(sx));
      const y1 = Math.min(srcSize - 1, y0 + 1);
      const x1 = Math.min(srcSize - 1, x0 + 1);
      const fy = sy - y0;
      const fx = sx - x0;
      out[y * dstSize + x] =
        src[y0 * srcSize + x0] * (1 - fy) * (1 - fx)
        + src[y0 * srcSize + x1] * (1 - fy) * fx
        + src[y1 * srcSize + x0] * fy * (1 - fx)
        + src[y1 * srcSize + x1] * fy * fx;
    }
  }
  return out;
}

function nearestResizeMask(src: Uint8Array, srcSize: number, dstSize: number): Uint8Array {
  const out = new Uint8Array(dstSize * dstSize);
  for (let y = 0; y < dstSize; y++) {
    for (let x = 0; x < dstSize; x++) {
      const sy = Math.min(srcSize - 1, Math.floor((y + 0.5) * srcSize / dstSize));
      const sx = Math.min(srcSize - 1, Math.floor((x + 0.5) * srcSize / dstSize));
      out[y * dstSize + x] = src[sy * srcSize + sx];
    }
  }
  return out;
}

export interface CropConfig {
  minScale: number;   // crop area lower bound as a fraction of the image
  maxScale: number;
  jitterBrightness: number;
  jitterContrast: number;
}

export const defaultCrop: CropConfig = {
  minScale: 0.5,
  maxScale: 1.0,
  jitterBrightness: 0.2,
  jitterContrast: 0.2,
};

export interface Augmented {
  image: Float64Array;
  mask?: Uint8Array;
}

/** Color jitter + random resized crop; mask (if given) crops identically. */
export function augment(image: Float64Array, size: number, rng: Rng,
                        cfg: CropConfig, mask?: Uint8Array): Augmented {
  const side = Math.max(2, Math.round(size * Math.sqrt(
    cfg.minScale + rng.uniform() * (cfg.maxScale - cfg.minScale))));
  const y0 = rng.int(size - side + 1);
  const x0 = rng.int(size - side + 1);
  const cropped = new Float64Array(side * side);
  for (let y = 0; y < side; y++) {
    for (let x = 0; x < side; x++) cropped[y * side + x] = image[(y0 + y) * size + x0 + x];
  }
  let out = bilinearResize(cropped, side, size);
  const brightness = 1 + (rng.uniform() * 2 - 1) * cfg.jitterBrightness;
  const contrast = 1 + (rng.uniform() * 2 - 1) * cfg.jitterContrast;
  let mean = 0;
  for (const v of out) mean += v;
  mean /= out.length;
  for (let i = 0; i < out.length; i++) {
    out[i] = Math.min(1, Math.max(0, (out[i] - mean) * contrast + mean * brightness));
  }
  let outMask: Uint8Array | undefined;
  if (mask) {
    const croppedMask = new Uint8Array(side * side);
    for (let y = 0; y < side; y++) {
      for (let x = 0; x < side; x++) croppedMask[y * side + x] = mask[(y0 + y) * size + x0 + x];
    }
    outMask = nearestResizeMask(croppedMask, side, size);
  }
  return { image: out, mask: outMask };
}
