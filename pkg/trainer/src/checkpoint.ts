/**
 * Named-tensor archive: a 4-byte little-endian header length, a JSON header
 * mapping name -> {rows, cols, offset}, then one float64 little-endian
 * payload. Nothing downstream parses this; features travel as FMAP.
 */

import * as fs from "node:fs";
import { Params } from "./nn.js";
import { Tensor } from "./tensor.js";

export function saveCheckpoint(path: string, params: Params): void {
  const names = [...params.keys()].sort();
  const header: Record<string, { rows: number; cols: number; offset: number }> = {};
  let offset = 0;
  for (const name of names) {
    const t = params.get(name)!;
    header[name] = { rows: t.rows, cols: t.cols, offset };
    offset += t.size * 8;
  }
  const headerBytes = Buffer.from(JSON.stringify(header), "utf8");
  const lead = Buffer.alloc(4);
  lead.writeUInt32LE(headerBytes.length, 0);
  const payload = Buffer.alloc(offset);
  for (const name of names) {
    const t = params.get(name)!;
    const view = Buffer.from(t.data.buffer, t.data.byteOffset, t.size * 8);
    view.copy(payload, header[name].offset);
  }
  fs.writeFileSync(path, Buffer.concat([lead, headerBytes, payload]));
}

export function loadCheckpoint(path: string, requiresGrad = true): Params {
  const blob = fs.readFileSync(path);
  const headerLen = blob.readUInt32LE(0);
  const header = JSON.parse(blob.subarray(4, 4 + headerLen).toString("utf8")) as
    Record<string, { rows: number; cols: number; offset: number }>;
  const payload = blob.subarray(4 + headerLen);
  const params: Params = new Map();
  for (const [name, meta] of Object.entries(header)) {
    const bytes = payload.subarray(meta.offset, meta.offset + meta.rows * meta.cols * 8);
    const data = new Float64Array(meta.rows * meta.cols);
    for (let i = 0; i < data.length; i++) data[i] = bytes.readDoubleLE(i * 8);
    params.set(name, new Tensor(data, meta.rows, meta.cols, requiresGrad));
  }
  return params;
}
