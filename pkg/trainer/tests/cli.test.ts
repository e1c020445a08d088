import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { afterAll, describe, expect, it } from "vitest";
import { main } from "../src/cli.js";
import { readFmap } from "../src/fmap.js";
import { ellipseSlice, writeDataset } from "./helpers.js";

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "trainer-cli-"));
afterAll(() => fs.rmSync(tmp, { recursive: true, force: true }));

const toyCfg = {
  imageSize: 64, patchSize: 16, dim: 16, depth: 4, epochs: 1, batchSize: 4,
  nLocalCrops: 1, prototypes: 16, headHidden: 32, seed: 0,
};

function writeToyData(): string {
  const slices = Array.from({ length: 8 }, (_, i) => {
    const s = ellipseSlice(64, i);
    s.entry.patient_id = `P${Math.floor(i / 2)}`;
    s.entry.series_id = `S${Math.floor(i / 2)}`;
    s.entry.slice_index = i % 2;
    return s;
  });
  return writeDataset(path.join(tmp, "data"), slices, 64);
}

describe("trainer cli", () => {
  it("pretrain -> export -> finetune round trip", () => {
    const manifest = writeToyData();
    const cfgPath = path.join(tmp, "cfg.json");
    fs.writeFileSync(cfgPath, JSON.stringify(toyCfg));

    expect(main(["pretrain", "--cfg", cfgPath, "--manifest", manifest,
                 "--out", path.join(tmp, "run")])).toBe(0);
    expect(fs.existsSync(path.join(tmp, "run", "teacher.ckpt"))).toBe(true);
    const log = JSON.parse(fs.readFileSync(path.join(tmp, "run", "pretrain_log.json"), "utf8"));
    expect(log.samplingLog[0].length).toBe(8);
    expect(log.iterations.length).toBeGreaterThan(0);

    expect(main(["export", "--cfg", cfgPath,
                 "--ckpt", path.join(tmp, "run", "teacher.ckpt"),
                 "--manifest", manifest,
                 "--out", path.join(tmp, "feats"),
                 "--encoder-id", "toy-teacher-e1"])).toBe(0);
    const featManifest = path.join(tmp, "feats", "features.jsonl");
    expect(fs.existsSync(featManifest)).toBe(true);
    const firstFeature = fs.readFileSync(featManifest, "utf8")
      .split("\n").filter(Boolean).map((l) => JSON.parse(l))[0].feature_path;
    const fmap = readFmap(firstFeature);
    expect(fmap.gridH).toBe(4);
    expect(fmap.channels).toBe(16);
    expect(fmap.encoderId).toBe("toy-teacher-e1");

    const entries = fs.readFileSync(manifest, "utf8").split("\n").filter(Boolean)
      .map((l) => JSON.parse(l));
    const samplePath = path.join(tmp, "sample.json");
    fs.writeFileSync(samplePath, JSON.stringify({
      sample: { seed: 0, train: entries.slice(0, 5), val: entries.slice(5, 8).concat(entries.slice(0, 2)) },
    }));
    expect(main(["finetune", "--cfg", cfgPath,
                 "--ckpt", path.join(tmp, "run", "teacher.ckpt"),
                 "--sample", samplePath,
                 "--out", path.join(tmp, "ft"),
                 "--min-epochs", "3", "--patience", "2"])).toBe(0);
    const ftLog = JSON.parse(fs.readFileSync(path.join(tmp, "ft", "finetune_log.json"), "utf8"));
    expect(ftLog.history.length).toBeGreaterThanOrEqual(3);
    expect(fs.existsSync(path.join(tmp, "ft", "adapters.ckpt"))).toBe(true);
  }, 180_000);

  it("unknown command and missing flags exit nonzero", () => {
    expect(main(["frobnicate"])).toBe(1);
    expect(main(["pretrain"])).toBe(1);
  });
});
