/**
 * FMAP writer: the binary interchange container the evaluation engine
 * reads. Little-endian always: magic "FMAP", version 1, dtype byte
 * (1 = float32), two reserved zero bytes, uint32 rank, uint32 dims,
 * row-major float32 payload; JSON sidecar <path>.json.
 */

import * as fs from "node:fs";

export interface FeatureGrid {
  gridH: number;
  gridW: number;
  channels: number;
  /** row-major (gridH, gridW, channels) */
  values: Float64Array;
  sliceRef: string;
  encoderId: string;
}

export function writeFmap(path: string, fmap: FeatureGrid): void {
  const { gridH, gridW, channels, values } = fmap;
  if (values.length !== gridH * gridW * channels) {
    throw new Error("feature grid size mismatch");
  }
  for (const v of values) {
    if (!Number.isFinite(v)) throw new Error("refusing to write non-finite features");
  }
  const header = Buffer.alloc(12 + 4 * 3);
  header.write("FMAP", 0, "ascii");
  header.writeUInt8(1, 4);          // version
  header.writeUInt8(1, 5);          // dtype float32
  header.writeUInt16LE(0, 6);       // reserved
  header.writeUInt32LE(3, 8);       // rank
  header.writeUInt32LE(gridH, 12);
  header.writeUInt32LE(gridW, 16);
  header.writeUInt32LE(channels, 20);
  const payload = Buffer.alloc(values.length * 4);
  for (let i = 0; i < values.length; i++) payload.writeFloatLE(Math.fround(values[i]), i * 4);
  fs.writeFileSync(path, Buffer.concat([header, payload]));
  const sidecar = {
    channels,
    encoder_id: fmap.encoderId,
    grid: [gridH, gridW],
    slice_ref: fmap.sliceRef,
  };
  fs.writeFileSync(path + ".json", JSON.stringify(sidecar) + "\n");
}

/** Strict reader used by the round-trip tests. */
export function readFmap(path: string): FeatureGrid {
  const blob = fs.readFileSync(path);
  if (blob.subarray(0, 4).toString("ascii") !== "FMAP") throw new Error("bad magic");
  if (blob.readUInt8(4) !== 1) throw new Error("unsupported version");
  if (blob.readUInt8(5) !== 1) throw new Error("expected float32 payload");
  const rank = blob.readUInt32LE(8);
  if (rank !== 3) throw new Error(`expected rank 3, got ${rank}`);
  const gridH = blob.readUInt32LE(12);
  const gridW = blob.readUInt32LE(16);
  const channels = blob.readUInt32LE(20);
  const expected = gridH * gridW * channels * 4;
  const payload = blob.subarray(24);
  if (payload.length !== expected) throw new Error("payload length mismatch");
  const values = new Float64Array(gridH * gridW * channels);
  for (let i = 0; i < values.length; i++) values[i] = payload.readFloatLE(i * 4);
  let sliceRef = "", encoderId = "";
  if (fs.existsSync(path + ".json")) {
    const meta = JSON.parse(fs.readFileSync(path + ".json", "utf8"));
    sliceRef = meta.slice_ref ?? "";
    encoderId = meta.encoder_id ?? "";
  }
  return { gridH, gridW, channels, values, sliceRef, encoderId };
}
