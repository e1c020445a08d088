/**
 * Few-shot adapter fine-tuning: bottleneck adapters in the first two and
 * last two blocks, frozen base encoder, a per-token pixel-logit head, soft
 * dice + BCE loss, early stopping on validation DSC.
 */

import { Slice, augment, defaultCrop } from "./data.js";
import { segmentationLoss } from "./dino.js";
import {
  EncoderConfig, Params, adapterBlocks, cloneParams, encode, encoderDepth,
  initAdapterParams, paramChecksum, tokensPerSide,
} from "./nn.js";
import { Rng } from "./rng.js";
import { Adam, zeroGrads } from "./trainer.js";
import { Tensor, addBias, matmul, sigmoid } from "./tensor.js";

export interface AdapterConfig {
  bottleneckDim: number;     // defaults to encoder dim / 4
  lr: number;
  minEpochs: number;
  patience: number;
  augment: boolean;
  seed: number;
}

export function defaultAdapter(dim: number): AdapterConfig {
  return {
    bottleneckDim: Math.max(1, Math.floor(dim / 4)),
    lr: 1e-4,
    minEpochs: 1000,
    patience: 200,
    augment: true,
    seed: 0,
  };
}

export interface SegHead {
  params: Params;
}

export function initSegHead(enc: EncoderConfig, seed: number): Params {
  const rng = new Rng(seed);
  const p2 = enc.patchSize * enc.patchSize;
  const params: Params = new Map();
  const W = new Tensor(new Float64Array(enc.dim * p2), enc.dim, p2, true);
  for (let i = 0; i < W.size; i++) W.data[i] = rng.gauss() / Math.sqrt(enc.dim);
  const b = new Tensor(new Float64Array(p2), 1, p2, true);
  params.set("seg.W", W);
  params.set("seg.b", b);
  return params;
}

/** Patch tokens -> per-pixel logits -> sigmoid probabilities (imageSize^2). */
export function segForward(image: Float64Array, enc: EncoderConfig, base: Params,
                           adapters: Params, head: Params): Tensor {
  const out = encode(image, enc, base, [], adapters);
  const logits = addBias(matmul(out.patches, head.get("seg.W")!), head.get("seg.b")!);
  return sigmoid(logits);   // rows = tokens, cols = patch^2 pixels
}

/** Token-major probabilities back to a row-major image grid. */
export function tokenGridToImage(probs: Tensor, enc: EncoderConfig): Float64Array {
  const t = tokensPerSide(enc);
  const p = enc.patchSize;
  const s = enc.imageSize;
  const out = new Float64Array(s * s);
  for (let row = 0; row < probs.rows; row++) {
    const py = Math.floor(row / t);
    const px = row % t;
    for (let dy = 0; dy < p; dy++) {
      for (let dx = 0; dx < p; dx++) {
        out[(py * p + dy) * s + px * p + dx] = probs.data[row * p * p + dy * p + dx];
      }
    }
  }
  return out;
}

function maskToTokenMajor(mask: Uint8Array, enc: EncoderConfig): Float64Array {
  const t = tokensPerSide(enc);
  const p = enc.patchSize;
  const s = enc.imageSize;
  const out = new Float64Array(t * t * p * p);
  for (let py = 0; py < t; py++) {
    for (let px = 0; px < t; px++) {
      const row = py * t + px;
      for (let dy = 0; dy < p; dy++) {
        for (let dx = 0; dx < p; dx++) {
          out[row * p * p + dy * p + dx] = mask[(py * p + dy) * s + px * p + dx] > 0 ? 1 : 0;
        }
      }
    }
  }
  return out;
}

export function diceScore(pred: Float64Array, mask: Uint8Array, thresh = 0.5): number {
  let inter = 0, p = 0, g = 0;
  for (let i = 0; i < pred.length; i++) {
    const pi = pred[i] > thresh ? 1 : 0;
    const gi = mask[i] > 0 ? 1 : 0;
    inter += pi & gi;
    p += pi;
    g += gi;
  }
  return p + g === 0 ? 1.0 : 2 * inter / (p + g);
}

export interface FinetuneResult {
  adapters: Params;
  head: Params;
  history: { epoch: number; trainLoss: number; trainDsc: number; valDsc: number }[];
  bestValDsc: number;
  bestEpoch: number;
  epochsRun: number;
  baseChecksumBefore: string;
  baseChecksumAfter: string;
}

/**
 * Train adapters + head on 5 slices, validate on 5; the base encoder is
 * frozen and verified unchanged by checksum. Runs at least minEpochs and
 * stops once validation DSC has not improved for `patience` epochs.
 */
export function adapterFinetune(base: Params, enc: EncoderConfig,
                                trainSlices: Slice[], valSlices: Slice[],
                                cfg: AdapterConfig,
                                maxEpochs = 5000): FinetuneResult {
  for (const t of base.values()) t.requiresGrad = false;
  const depth = encoderDepth(base);
  const blocks = adapterBlocks(depth);
  const adapters = initAdapterParams(enc, blocks, cfg.bottleneckDim, cfg.seed);
  const head = initSegHead(enc, cfg.seed + 1);
  const adam = new Adam(cfg.lr);
  const rng = new Rng(cfg.seed + 2);
  const checksumBefore = paramChecksum(base);

  const history: FinetuneResult["history"] = [];
  let bestValDsc = -1;
  let bestEpoch = -1;
  let bestAdapters = cloneParams(adapters);
  let bestHead = cloneParams(head);
  let epoch = 0;
  for (; epoch < maxEpochs; epoch++) {
    let lossAcc = 0;
    for (const slice of trainSlices) {
      const { image, mask } = cfg.augment
        ? augment(slice.image, enc.imageSize, rng, defaultCrop, slice.mask)
        : { image: slice.image, mask: slice.mask };
      const probs = segForward(image, enc, base, adapters, head);
      const loss = segmentationLoss(probs, maskToTokenMajor(mask!, enc));
      zeroGrads(adapters);
      zeroGrads(head);
      loss.backward();
      adam.step(adapters);
      adam.step(head);
      lossAcc += loss.data[0];
    }
    const trainDsc = meanDice(trainSlices, enc, base, adapters, head);
    const valDsc = meanDice(valSlices, enc, base, adapters, head);
    history.push({ epoch, trainLoss: lossAcc / trainSlices.length, trainDsc, valDsc });
    if (valDsc > bestValDsc) {
      bestValDsc = valDsc;
      bestEpoch = epoch;
      bestAdapters = cloneParams(adapters);
      bestHead = cloneParams(head);
    }
    if (epoch + 1 >= cfg.minEpochs && epoch - bestEpoch >= cfg.patience) {
      epoch++;
      break;
    }
  }
  return {
    adapters: bestAdapters,
    head: bestHead,
    history,
    bestValDsc,
    bestEpoch,
    epochsRun: epoch,
    baseChecksumBefore: checksumBefore,
    baseChecksumAfter: paramChecksum(base),
  };
}

export function meanDice(slices: Slice[], enc: EncoderConfig, base: Params,
                         adapters: Params, head: Params): number {
  let acc = 0;
  for (const s of slices) {
    const probs = segForward(s.image, enc, base, adapters, head);
    acc += diceScore(tokenGridToImage(probs, enc), s.mask!);
  }
  return acc / slices.length;
}
