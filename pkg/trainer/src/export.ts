/**
 * Frozen-encoder feature export: one FMAP per manifest slice, patch grid =
 * imageSize / patchSize, channels = encoder width.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { ManifestEntry, Slice, bilinearResize, loadDataset, loadManifest } from "./data.js";
import { writeFmap } from "./fmap.js";
import { EncoderConfig, Params, encode, tokensPerSide } from "./nn.js";

export interface ExportResult {
  manifestPath: string;
  written: string[];
}

export function exportFeatures(base: Params, enc: EncoderConfig,
                               manifestPath: string, outDir: string,
                               encoderId: string,
                               norm: "slice_wise" | "volume_wise" = "slice_wise"): ExportResult {
  fs.mkdirSync(outDir, { recursive: true });
  const entries = loadManifest(manifestPath);
  const dataset = loadDataset(entries, norm);
  const t = tokensPerSide(enc);
  const written: string[] = [];
  const outEntries: ManifestEntry[] = [];
  for (const slice of dataset) {
    const resized = resizeTo(slice, enc.imageSize);
    const out = encode(resized, enc, base);
    const name = `${slice.entry.patient_id}_${slice.entry.series_id}_`
      + `${String(slice.entry.slice_index).padStart(4, "0")}.fmap`;
    const target = path.join(outDir, name);
    writeFmap(target, {
      gridH: t,
      gridW: t,
      channels: enc.dim,
      values: Float64Array.from(out.patches.data),
      sliceRef: `${slice.entry.patient_id}/${slice.entry.series_id}/${slice.entry.slice_index}`,
      encoderId,
    });
    written.push(target);
    outEntries.push({ ...slice.entry, feature_path: target });
  }
  const outManifest = path.join(outDir, "features.jsonl");
  fs.writeFileSync(outManifest,
    outEntries.map((e) => JSON.stringify(sortKeys(e))).join("\n") + "\n");
  return { manifestPath: outManifest, written };
}

function resizeTo(slice: Slice, size: number): Float64Array {
  const side = Math.round(Math.sqrt(slice.image.length));
  if (side === size) return slice.image;
  return bilinearResize(slice.image, side, size);
}

function sortKeys<T extends object>(obj: T): T {
  return Object.fromEntries(
    Object.entries(obj).filter(([, v]) => v !== undefined).sort(([a], [b]) => a.localeCompare(b)),
  ) as T;
}
