import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { afterAll, describe, expect, it } from "vitest";
import {
  augment, bilinearResize, defaultCrop, loadDataset, loadManifest,
  minMaxNormalize, readGrayPng, readMaskPng,
} from "../src/data.js";
import { Rng } from "../src/rng.js";
import { ellipseSlice, writeDataset, writeGrayPng } from "./helpers.js";

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "trainer-data-"));
afterAll(() => fs.rmSync(tmp, { recursive: true, force: true }));

describe("png io", () => {
  it("gray png round trip preserves intensities within quantization", () => {
    const slice = ellipseSlice(32, 0);
    const target = path.join(tmp, "rt.png");
    writeGrayPng(target, slice.image, 32);
    const back = readGrayPng(target);
    expect(back.width).toBe(32);
    for (let i = 0; i < slice.image.length; i++) {
      expect(Math.abs(back.pixels[i] - slice.image[i])).toBeLessThanOrEqual(1 / 255 + 1e-9);
    }
  });

  it("mask png preserves label values", () => {
    const slice = ellipseSlice(16, 1);
    const maskF = new Float64Array(slice.mask!.length);
    for (let i = 0; i < maskF.length; i++) maskF[i] = slice.mask![i] / 255;
    const target = path.join(tmp, "mask.png");
    writeGrayPng(target, maskF, 16);
    expect(Array.from(readMaskPng(target))).toEqual(Array.from(slice.mask!));
  });
});

describe("manifest and normalization", () => {
  it("loads entries and skips the dataset_name header", () => {
    const manifest = path.join(tmp, "m.jsonl");
    fs.writeFileSync(manifest, JSON.stringify({ dataset_name: "demo" }) + "\n"
      + JSON.stringify({ patient_id: "P0", series_id: "S0", slice_index: 0,
                         image_path: "x.png" }) + "\n");
    const entries = loadManifest(manifest);
    expect(entries).toHaveLength(1);
    expect(entries[0].patient_id).toBe("P0");
  });

  it("min-max normalization spans [0,1] and zeros constants", () => {
    const out = minMaxNormalize(Float64Array.from([2, 4, 6, 10]));
    expect(out[0]).toBe(0);
    expect(out[3]).toBe(1);
    expect(Array.from(minMaxNormalize(Float64Array.from([3, 3, 3])))).toEqual([0, 0, 0]);
  });

  it("volume_wise normalization shares one range per series", () => {
    const slices = [ellipseSlice(16, 2), ellipseSlice(16, 3)];
    slices[0].entry.patient_id = slices[1].entry.patient_id = "P9";
    slices[0].entry.series_id = slices[1].entry.series_id = "S9";
    slices[1].entry.slice_index = 1;
    // brighten slice 1 so the volume range is driven by it
    for (let i = 0; i < slices[1].image.length; i++) {
      slices[1].image[i] = Math.min(1, slices[1].image[i] * 0.5 + 0.5);
    }
    const manifest = writeDataset(path.join(tmp, "vol"), slices, 16);
    const loaded = loadDataset(loadManifest(manifest), "volume_wise");
    const max0 = Math.max(...loaded[0].image);
    const max1 = Math.max(...loaded[1].image);
    expect(max1).toBeCloseTo(1.0, 6);
    expect(max0).toBeLessThan(0.95);
    const sliceWise = loadDataset(loadManifest(manifest), "slice_wise");
    expect(Math.max(...sliceWise[0].image)).toBeCloseTo(1.0, 6);
  });
});

describe("augmentation", () => {
  it("is deterministic per seed and stays in range", () => {
    const slice = ellipseSlice(32, 5);
    const a = augment(slice.image, 32, new Rng(7), defaultCrop, slice.mask);
    const b = augment(slice.image, 32, new Rng(7), defaultCrop, slice.mask);
    expect(Array.from(a.image)).toEqual(Array.from(b.image));
    expect(Array.from(a.mask!)).toEqual(Array.from(b.mask!));
    for (const v of a.image) {
      expect(v).toBeGreaterThanOrEqual(0);
      expect(v).toBeLessThanOrEqual(1);
    }
  });

  it("keeps image and mask aligned through crop/resize", () => {
    const slice = ellipseSlice(32, 6);
    const out = augment(slice.image, 32, new Rng(3),
                        { ...defaultCrop, jitterBrightness: 0, jitterContrast: 0 },
                        slice.mask);
    // foreground should stay brighter than background after the shared crop
    let fg = 0, nFg = 0, bg = 0, nBg = 0;
    for (let i = 0; i < out.image.length; i++) {
      if (out.mask![i]) { fg += out.image[i]; nFg++; } else { bg += out.image[i]; nBg++; }
    }
    expect(nFg).toBeGreaterThan(0);
    expect(fg / nFg).toBeGreaterThan(bg / nBg + 0.3);
  });

  it("bilinear resize preserves constants and means approximately", () => {
    const img = new Float64Array(16 * 16).fill(0.6);
    const up = bilinearResize(img, 16, 32);
    for (const v of up) expect(v).toBeCloseTo(0.6, 12);
  });
});
