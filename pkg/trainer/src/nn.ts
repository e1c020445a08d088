/**
 * Tiny ViT-style encoder with single-head attention, a learned mask token
 * for masked-patch training, and optional bottleneck adapters per block.
 */

import {
  Tensor, add, addBias, concatRows, gatherRows, gelu, layerNorm, matmul, scale,
  softmaxRows, transpose,
} from "./tensor.js";
import { Rng } from "./rng.js";

export type Params = Map<string, Tensor>;

export interface EncoderConfig {
  imageSize: number;
  patchSize: number;
  dim: number;
  depth: number;
  mlpRatio: number;
}

export const defaultEncoder: EncoderConfig = {
  imageSize: 64,
  patchSize: 16,
  dim: 32,
  depth: 4,
  mlpRatio: 4,
};

export function tokensPerSide(cfg: EncoderConfig): number {
  if (cfg.imageSize % cfg.patchSize !== 0) {
    throw new Error("imageSize must be a multiple of patchSize");
  }
  return cfg.imageSize / cfg.patchSize;
}

function param(params: Params, name: string, rows: number, cols: number,
               init: (i: number) => number): Tensor {
  const t = Tensor.zeros(rows, cols, true);
  for (let i = 0; i < t.size; i++) t.data[i] = init(i);
  params.set(name, t);
  return t;
}

/** Fresh encoder parameters, seeded; truncated-normal-ish init. */
export function initEncoderParams(cfg: EncoderConfig, seed: number): Params {
  const rng = new Rng(seed);
  const params: Params = new Map();
  const g = (std: number) => () => rng.gauss() * std;
  const zeros = () => 0;
  const ones = () => 1;
  const p2 = cfg.patchSize * cfg.patchSize;
  const t = tokensPerSide(cfg);
  param(params, "patch.W", p2, cfg.dim, g(1 / Math.sqrt(p2)));
  param(params, "patch.b", 1, cfg.dim, zeros);
  param(params, "cls", 1, cfg.dim, g(0.02));
  param(params, "mask_token", 1, cfg.dim, g(0.02));
  param(params, "pos", t * t + 1, cfg.dim, g(0.02));
  for (let l = 0; l < cfg.depth; l++) {
    const pre = `block${l}.`;
    param(params, pre + "ln1.g", 1, cfg.dim, ones);
    param(params, pre + "ln1.b", 1, cfg.dim, zeros);
    for (const name of ["q", "k", "v", "o"]) {
      param(params, pre + `attn.${name}W`, cfg.dim, cfg.dim, g(1 / Math.sqrt(cfg.dim)));
      param(params, pre + `attn.${name}b`, 1, cfg.dim, zeros);
    }
    param(params, pre + "ln2.g", 1, cfg.dim, ones);
    param(params, pre + "ln2.b", 1, cfg.dim, zeros);
    param(params, pre + "mlp.W1", cfg.dim, cfg.dim * cfg.mlpRatio, g(1 / Math.sqrt(cfg.dim)));
    param(params, pre + "mlp.b1", 1, cfg.dim * cfg.mlpRatio, zeros);
    param(params, pre + "mlp.W2", cfg.dim * cfg.mlpRatio, cfg.dim, g(1 / Math.sqrt(cfg.dim * cfg.mlpRatio)));
    param(params, pre + "mlp.b2", 1, cfg.dim, zeros);
  }
  param(params, "ln_out.g", 1, cfg.dim, ones);
  param(params, "ln_out.b", 1, cfg.dim, zeros);
  return params;
}

/** Bottleneck adapter parameters for the given block indices. */
export function initAdapterParams(cfg: EncoderConfig, blocks: number[],
                                  bottleneck: number, seed: number): Params {
  const rng = new Rng(seed);
  const params: Params = new Map();
  for (const l of blocks) {
    const pre = `adapter${l}.`;
    param(params, pre + "W1", cfg.dim, bottleneck, () => rng.gauss() / Math.sqrt(cfg.dim));
    param(params, pre + "b1", 1, bottleneck, () => 0);
    // zero-initialized up-projection: adapters start as identity
    param(params, pre + "W2", bottleneck, cfg.dim, () => 0);
    param(params, pre + "b2", 1, cfg.dim, () => 0);
  }
  return params;
}

export function adapterBlocks(depth: number): number[] {
  return [0, 1, depth - 2, depth - 1];
}

function linear(x: Tensor, params: Params, name: string): Tensor {
  return addBias(matmul(x, params.get(name + "W")!), params.get(name + "b")!);
}

function block(x: Tensor, params: Params, l: number, dim: number,
               adapters: Params | null): Tensor {
  const pre = `block${l}.`;
  const ln1 = layerNorm(x, params.get(pre + "ln1.g")!, params.get(pre + "ln1.b")!);
  const q = linear(ln1, params, pre + "attn.q");
  const k = linear(ln1, params, pre + "attn.k");
  const v = linear(ln1, params, pre + "attn.v");
  const scores = scale(matmul(q, transpose(k)), 1 / Math.sqrt(dim));
  const attn = matmul(softmaxRows(scores), v);
  let h = add(x, linear(attn, params, pre + "attn.o"));
  const ln2 = layerNorm(h, params.get(pre + "ln2.g")!, params.get(pre + "ln2.b")!);
  const mlp = addBias(matmul(
    gelu(addBias(matmul(ln2, params.get(pre + "mlp.W1")!), params.get(pre + "mlp.b1")!)),
    params.get(pre + "mlp.W2")!), params.get(pre + "mlp.b2")!);
  h = add(h, mlp);
  if (adapters && adapters.has(`adapter${l}.W1`)) {
    const apre = `adapter${l}.`;
    const down = addBias(matmul(h, adapters.get(apre + "W1")!), adapters.get(apre + "b1")!);
    const up = addBias(matmul(gelu(down), adapters.get(apre + "W2")!), adapters.get(apre + "b2")!);
    h = add(h, up);
  }
  return h;
}

/** Rearrange an image (size x size floats) into (tokens, patch^2) rows. */
export function patchify(image: Float64Array, cfg: EncoderConfig): Tensor {
  const { imageSize: s, patchSize: p } = cfg;
  const t = tokensPerSide(cfg);
  const out = Tensor.zeros(t * t, p * p);
  for (let py = 0; py < t; py++) {
    for (let px = 0; px < t; px++) {
      const row = py * t + px;
      for (let dy = 0; dy < p; dy++) {
        for (let dx = 0; dx < p; dx++) {
          out.data[row * p * p + dy * p + dx] = image[(py * p + dy) * s + px * p + dx];
        }
      }
    }
  }
  return out;
}

export interface EncoderOutput {
  cls: Tensor;      // (1, dim)
  patches: Tensor;  // (tokens, dim)
}

/**
 * Forward pass. maskedTokens (patch indices) swap the corresponding patch
 * embeddings for the learned mask token before positions are added.
 */
export function encode(image: Float64Array, cfg: EncoderConfig, params: Params,
                       maskedTokens: number[] = [],
                       adapters: Params | null = null): EncoderOutput {
  const nTokens = tokensPerSide(cfg) ** 2;
  let emb = addBias(matmul(patchify(image, cfg), params.get("patch.W")!),
                    params.get("patch.b")!);
  if (maskedTokens.length) {
    const masked = new Set(maskedTokens);
    const maskTok = params.get("mask_token")!;
    const rows: Tensor[] = [];
    for (let i = 0; i < nTokens; i++) {
      rows.push(masked.has(i) ? maskTok : rowView(emb, i));
    }
    emb = concatRows(rows);
  }
  let x = concatRows([params.get("cls")!, emb]);
  x = add(x, params.get("pos")!);
  for (let l = 0; ; l++) {
    if (!params.has(`block${l}.ln1.g`)) break;
    x = block(x, params, l, cfg.dim, adapters);
  }
  x = layerNorm(x, params.get("ln_out.g")!, params.get("ln_out.b")!);
  return {
    cls: gatherRows(x, [0]),
    patches: gatherRows(x, Array.from({ length: nTokens }, (_, i) => i + 1)),
  };
}

function rowView(x: Tensor, row: number): Tensor {
  return gatherRows(x, [row]);
}

export function encoderDepth(params: Params): number {
  let depth = 0;
  while (params.has(`block${depth}.ln1.g`)) depth++;
  return depth;
}

/** Flat copy of every parameter; used for freeze checks and EMA. */
export function cloneParams(params: Params): Params {
  const out: Params = new Map();
  for (const [name, t] of params) {
    const copy = t.clone();
    copy.grad = null;
    out.set(name, copy);
  }
  return out;
}

export function paramChecksum(params: Params): string {
  let h = 0n;
  const prime = 1099511628211n;
  for (const name of [...params.keys()].sort()) {
    const t = params.get(name)!;
    const bytes = new Uint8Array(t.data.buffer.slice(0));
    for (const b of bytes) {
      h = (h ^ BigInt(b)) * prime & 0xffffffffffffffffn;
    }
  }
  return h.toString(16);
}
