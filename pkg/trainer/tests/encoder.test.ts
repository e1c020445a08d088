import { describe, expect, it } from "vitest";
import {
  adapterBlocks, cloneParams, encode, encoderDepth, initAdapterParams,
  initEncoderParams, patchify, tokensPerSide,
} from "../src/nn.js";
import { Rng } from "../src/rng.js";

const enc = { imageSize: 32, patchSize: 16, dim: 16, depth: 4, mlpRatio: 4 };

function randomImage(size: number, seed: number): Float64Array {
  const rng = new Rng(seed);
  const img = new Float64Array(size * size);
  for (let i = 0; i < img.length; i++) img[i] = rng.uniform();
  return img;
}

describe("encoder", () => {
  it("patchify lays out patches row-major", () => {
    const img = new Float64Array(32 * 32);
    for (let i = 0; i < img.length; i++) img[i] = i;
    const patches = patchify(img, enc);
    expect(patches.rows).toBe(4);
    expect(patches.cols).toBe(256);
    expect(patches.at(0, 0)).toBe(0);
    expect(patches.at(1, 0)).toBe(16);        // second patch starts at column 16
    expect(patches.at(2, 0)).toBe(16 * 32);   // third patch starts at row 16
  });

  it("produces cls plus one token per patch", () => {
    const params = initEncoderParams(enc, 0);
    const out = encode(randomImage(32, 1), enc, params);
    expect(out.cls.rows).toBe(1);
    expect(out.patches.rows).toBe(tokensPerSide(enc) ** 2);
    expect(out.patches.cols).toBe(enc.dim);
  });

  it("masking changes masked-token outputs and keeps depth intact", () => {
    const params = initEncoderParams(enc, 0);
    const img = randomImage(32, 2);
    const plain = encode(img, enc, params);
    const masked = encode(img, enc, params, [1, 3]);
    const rowDiff = (r: number) => {
      let d = 0;
      for (let c = 0; c < enc.dim; c++) {
        d = Math.max(d, Math.abs(plain.patches.at(r, c) - masked.patches.at(r, c)));
      }
      return d;
    };
    expect(rowDiff(1)).toBeGreaterThan(1e-6);
    expect(rowDiff(3)).toBeGreaterThan(1e-6);
    expect(encoderDepth(params)).toBe(4);
  });

  it("adapter blocks are exactly the first two and last two", () => {
    expect(adapterBlocks(4)).toEqual([0, 1, 2, 3]);
    expect(adapterBlocks(6)).toEqual([0, 1, 4, 5]);
    const adapters = initAdapterParams({ ...enc, depth: 6 }, adapterBlocks(6), 4, 0);
    const blocksWithAdapters = new Set(
      [...adapters.keys()].map((k) => Number(k.match(/^adapter(\d+)\./)![1])));
    expect([...blocksWithAdapters].sort((a, b) => a - b)).toEqual([0, 1, 4, 5]);
  });

  it("zero-initialized adapters leave the forward pass unchanged", () => {
    const params = initEncoderParams(enc, 3);
    const adapters = initAdapterParams(enc, adapterBlocks(enc.depth), 4, 9);
    const img = randomImage(32, 4);
    const plain = encode(img, enc, params);
    const adapted = encode(img, enc, params, [], adapters);
    for (let i = 0; i < plain.patches.size; i++) {
      expect(adapted.patches.data[i]).toBeCloseTo(plain.patches.data[i], 12);
    }
  });

  it("encoder is deterministic per seed", () => {
    const a = initEncoderParams(enc, 42);
    const b = initEncoderParams(enc, 42);
    for (const [name, t] of a) {
      expect(Buffer.compare(Buffer.from(t.data.buffer),
                            Buffer.from(b.get(name)!.data.buffer))).toBe(0);
    }
  });

  it("cloneParams detaches storage", () => {
    const a = initEncoderParams(enc, 1);
    const b = cloneParams(a);
    b.get("cls")!.data[0] += 1;
    expect(a.get("cls")!.data[0]).not.toBe(b.get("cls")!.data[0]);
  });
});
