/**
 * trainer CLI:
 *   pretrain --cfg cfg.json --manifest m.jsonl --out dir
 *   finetune --ckpt enc.ckpt --sample sample.json --out dir [--cfg cfg.json]
 *   export   --ckpt enc.ckpt --manifest m.jsonl --out dir [--cfg cfg.json]
 *
 * cfg.json overrides any TrainerConfig field; outputs are a checkpoint, a
 * JSON training log, and FMAP features the evaluation engine reads.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { loadCheckpoint, saveCheckpoint } from "./checkpoint.js";
import { loadDataset, loadManifest, readGrayPng, readMaskPng, minMaxNormalize, Slice } from "./data.js";
import { adapterFinetune, defaultAdapter } from "./finetune.js";
import { exportFeatures } from "./export.js";
import { TrainerConfig, defaultTrainer, encoderConfig, pretrain } from "./trainer.js";

function parseArgs(argv: string[]): { cmd: string; flags: Map<string, string> } {
  const [cmd, ...rest] = argv;
  const flags = new Map<string, string>();
  for (let i = 0; i < rest.length; i += 2) {
    if (!rest[i].startsWith("--") || i + 1 >= rest.length) {
      throw new Error(`malformed flag ${rest[i]}`);
    }
    flags.set(rest[i].slice(2), rest[i + 1]);
  }
  return { cmd, flags };
}

function loadTrainerConfig(flags: Map<string, string>): TrainerConfig {
  const cfg = { ...defaultTrainer };
  const cfgPath = flags.get("cfg");
  if (cfgPath) Object.assign(cfg, JSON.parse(fs.readFileSync(cfgPath, "utf8")));
  if (flags.has("seed")) cfg.seed = Number(flags.get("seed"));
  return cfg;
}

function requireFlag(flags: Map<string, string>, name: string): string {
  const v = flags.get(name);
  if (!v) throw new Error(`missing --${name}`);
  return v;
}

function cmdPretrain(flags: Map<string, string>): void {
  const cfg = loadTrainerConfig(flags);
  const outDir = requireFlag(flags, "out");
  fs.mkdirSync(outDir, { recursive: true });
  const entries = loadManifest(requireFlag(flags, "manifest"));
  const dataset = loadDataset(entries, cfg.norm);
  const outcome = pretrain(dataset, cfg);
  saveCheckpoint(path.join(outDir, "teacher.ckpt"), outcome.result.teacher);
  saveCheckpoint(path.join(outDir, "student.ckpt"), outcome.result.student);
  fs.writeFileSync(path.join(outDir, "pretrain_log.json"), JSON.stringify({
    config: cfg,
    diverged: outcome.diverged,
    epochMeanLoss: outcome.epochMeanLoss,
    samplingLog: outcome.result.samplingLog,
    iterations: outcome.result.log,
  }, null, 2) + "\n");
  console.log(`pretrain done: epochs=${outcome.epochMeanLoss.length} `
    + `loss=${outcome.epochMeanLoss.map((v) => v.toFixed(4)).join(",")}`);
}

function loadSampleSlices(samplePath: string, imageSize: number): { train: Slice[]; val: Slice[] } {
  const sample = JSON.parse(fs.readFileSync(samplePath, "utf8"));
  const body = sample.sample ?? sample;
  const load = (rows: any[]): Slice[] => rows.map((entry) => {
    const img = readGrayPng(entry.image_path);
    if (img.width !== imageSize || img.height !== imageSize) {
      throw new Error(`slice ${entry.image_path} is ${img.width}x${img.height}, `
        + `trainer expects ${imageSize}`);
    }
    return {
      entry,
      image: minMaxNormalize(img.pixels),
      mask: readMaskPng(entry.mask_path),
    };
  });
  return { train: load(body.train), val: load(body.val) };
}

function cmdFinetune(flags: Map<string, string>): void {
  const cfg = loadTrainerConfig(flags);
  const outDir = requireFlag(flags, "out");
  fs.mkdirSync(outDir, { recursive: true });
  const base = loadCheckpoint(requireFlag(flags, "ckpt"), false);
  const enc = encoderConfig(cfg);
  const { train, val } = loadSampleSlices(requireFlag(flags, "sample"), enc.imageSize);
  const adapterCfg = { ...defaultAdapter(cfg.dim), seed: cfg.seed };
  if (flags.has("min-epochs")) adapterCfg.minEpochs = Number(flags.get("min-epochs"));
  if (flags.has("patience")) adapterCfg.patience = Number(flags.get("patience"));
  const result = adapterFinetune(base, enc, train, val, adapterCfg);
  if (result.baseChecksumBefore !== result.baseChecksumAfter) {
    throw new Error("frozen base encoder changed during fine-tuning");
  }
  saveCheckpoint(path.join(outDir, "adapters.ckpt"),
    new Map([...result.adapters, ...result.head]));
  fs.writeFileSync(path.join(outDir, "finetune_log.json"), JSON.stringify({
    adapterConfig: adapterCfg,
    bestValDsc: result.bestValDsc,
    bestEpoch: result.bestEpoch,
    epochsRun: result.epochsRun,
    history: result.history,
  }, null, 2) + "\n");
  console.log(`finetune done: best val DSC ${result.bestValDsc.toFixed(4)} `
    + `at epoch ${result.bestEpoch}`);
}

function cmdExport(flags: Map<string, string>): void {
  const cfg = loadTrainerConfig(flags);
  const base = loadCheckpoint(requireFlag(flags, "ckpt"), false);
  const result = exportFeatures(base, encoderConfig(cfg),
    requireFlag(flags, "manifest"), requireFlag(flags, "out"),
    flags.get("encoder-id") ?? "toy-teacher", cfg.norm);
  console.log(`exported ${result.written.length} feature maps -> ${result.manifestPath}`);
}

export function main(argv: string[]): number {
  try {
    const { cmd, flags } = parseArgs(argv);
    if (cmd === "pretrain") cmdPretrain(flags);
    else if (cmd === "finetune") cmdFinetune(flags);
    else if (cmd === "export") cmdExport(flags);
    else {
      console.error("usage: trainer <pretrain|finetune|export> [--flag value ...]");
      return 1;
    }
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

const invokedDirectly = process.argv[1] && (
  process.argv[1].endsWith("cli.js") || process.argv[1].endsWith("cli.ts"));
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
