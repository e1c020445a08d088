import * as fs from "node:fs";
import * as path from "node:path";
import { PNG } from "pngjs";
import { Slice } from "../src/data.js";
import { Rng } from "../src/rng.js";

/** Write a [0,1] image as 8-bit grayscale PNG (round-half-away like the engine). */
export function writeGrayPng(target: string, pixels: Float64Array, size: number): void {
  const png = new PNG({ width: size, height: size, colorType: 0, inputColorType: 0,
                        bitDepth: 8, inputHasAlpha: false });
  const buf = Buffer.alloc(size * size);
  for (let i = 0; i < pixels.length; i++) {
    buf[i] = Math.min(255, Math.max(0, Math.floor(pixels[i] * 255 + 0.5)));
  }
  (png as any).data = buf;
  fs.writeFileSync(target, PNG.sync.write(png, { colorType: 0, inputColorType: 0,
                                                 bitDepth: 8, inputHasAlpha: false }));
}

export function ellipseSlice(size: number, seed: number): Slice {
  const rng = new Rng(seed);
  const image = new Float64Array(size * size);
  const mask = new Uint8Array(size * size);
  const cy = size / 2 + (rng.uniform() - 0.5) * size * 0.2;
  const cx = size / 2 + (rng.uniform() - 0.5) * size * 0.2;
  const ry = size * (0.2 + rng.uniform() * 0.12);
  const rx = size * (0.2 + rng.uniform() * 0.12);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const inside = ((y - cy) / ry) ** 2 + ((x - cx) / rx) ** 2 <= 1;
      const i = y * size + x;
      mask[i] = inside ? 1 : 0;
      const noise = (rng.uniform() - 0.5) * 0.08;
      image[i] = Math.min(1, Math.max(0, (inside ? 0.8 : 0.1) + noise));
    }
  }
  return {
    entry: { patient_id: `P${seed}`, series_id: `S${seed}`, slice_index: 0,
             image_path: "", mask_path: "" },
    image,
    mask,
  };
}

/** Materialize slices as PNG files plus a JSON-lines manifest. */
export function writeDataset(dir: string, slices: Slice[], size: number): string {
  fs.mkdirSync(dir, { recursive: true });
  const lines: string[] = [];
  slices.forEach((slice, i) => {
    const imgPath = path.join(dir, `img_${i}.png`);
    const maskPath = path.join(dir, `mask_${i}.png`);
    writeGrayPng(imgPath, slice.image, size);
    const maskF = new Float64Array(slice.mask!.length);
    for (let j = 0; j < maskF.length; j++) maskF[j] = slice.mask![j] / 255;
    writeGrayPng(maskPath, maskF, size);
    slice.entry.image_path = imgPath;
    slice.entry.mask_path = maskPath;
    lines.push(JSON.stringify({ ...slice.entry, image_path: imgPath, mask_path: maskPath }));
  });
  const manifest = path.join(dir, "manifest.jsonl");
  fs.writeFileSync(manifest, lines.join("\n") + "\n");
  return manifest;
}
