/**
 * Toy-scale student-teacher pretraining: two global crops plus local crops,
 * prototype cross-entropy between the sharpened/centered teacher and the
 * student, a masked-token reconstruction term, Adam on the student, EMA on
 * the teacher.
 */

import {
  EncoderConfig, Params, cloneParams, encode, initEncoderParams, tokensPerSide,
} from "./nn.js";
import {
  HeadConfig, distillationLoss, emaUpdate, headForward, initHeadParams,
  teacherProbs, updateCenter,
} from "./dino.js";
import { CropConfig, Slice, augment, defaultCrop } from "./data.js";
import { Rng } from "./rng.js";
import { Tensor, add, gatherRows, scale } from "./tensor.js";

export interface TrainerConfig {
  epochs: number;
  baseLr: number;
  sampling: "with_replacement" | "epoch_based";
  norm: "slice_wise" | "volume_wise";
  init: "both" | "student_only";
  emaMomentum: number;
  dinoWeight: number;
  ibotWeight: number;
  maskRatio: number;
  imageSize: number;
  patchSize: number;
  dim: number;
  depth: number;
  prototypes: number;
  headHidden: number;
  tempStudent: number;
  tempTeacher: number;
  centerMomentum: number;
  batchSize: number;
  nLocalCrops: number;
  seed: number;
}

export const defaultTrainer: TrainerConfig = {
  epochs: 4,
  baseLr: 4e-4,
  sampling: "epoch_based",
  norm: "slice_wise",
  init: "both",
  emaMomentum: 0.999,
  dinoWeight: 1.0,
  ibotWeight: 1.0,
  maskRatio: 0.3,
  imageSize: 64,
  patchSize: 16,
  dim: 32,
  depth: 4,
  prototypes: 32,
  headHidden: 64,
  tempStudent: 0.1,
  tempTeacher: 0.04,
  centerMomentum: 0.9,
  batchSize: 8,
  nLocalCrops: 2,
  seed: 0,
};

export function encoderConfig(cfg: TrainerConfig): EncoderConfig {
  return { imageSize: cfg.imageSize, patchSize: cfg.patchSize, dim: cfg.dim,
           depth: cfg.depth, mlpRatio: 4 };
}

export interface StudentTeacher {
  student: Params;
  teacher: Params;
}

/**
 * init = "both": student and teacher both take the checkpoint weights
 * bitwise. init = "student_only": the teacher starts from a fresh seeded
 * initialization instead.
 */
export function initFromCheckpoint(ckpt: Params, cfg: TrainerConfig): StudentTeacher {
  const enc = encoderConfig(cfg);
  const expected = initEncoderParams(enc, cfg.seed);
  for (const [name, t] of expected) {
    const c = ckpt.get(name);
    if (!c || c.rows !== t.rows || c.cols !== t.cols) {
      throw new Error(`checkpoint mismatch at ${name}`);
    }
  }
  const student = cloneParams(ckpt);
  const teacher = cfg.init === "both"
    ? cloneParams(ckpt)
    : initEncoderParams(enc, cfg.seed + 1);
  for (const t of student.values()) t.requiresGrad = true;
  for (const t of teacher.values()) t.requiresGrad = false;
  return { student, teacher };
}

/** Sampling order for one epoch over n images. */
export function samplingOrder(n: number, strategy: "with_replacement" | "epoch_based",
                              rng: Rng): number[] {
  if (strategy === "epoch_based") {
    const order = Array.from({ length: n }, (_, i) => i);
    rng.shuffle(order);
    return order;
  }
  return Array.from({ length: n }, () => rng.int(n));
}

export class Adam {
  private m = new Map<string, Float64Array>();
  private v = new Map<string, Float64Array>();
  private t = 0;

  constructor(private lr: number, private beta1 = 0.9, private beta2 = 0.999,
              private eps = 1e-8) {}

  step(params: Params): void {
    this.t += 1;
    for (const [name, p] of params) {
      if (!p.requiresGrad || !p.grad) continue;
      if (!this.m.has(name)) {
        this.m.set(name, new Float64Array(p.size));
        this.v.set(name, new Float64Array(p.size));
      }
      const m = this.m.get(name)!;
      const v = this.v.get(name)!;
      const bc1 = 1 - Math.pow(this.beta1, this.t);
      const bc2 = 1 - Math.pow(this.beta2, this.t);
      for (let i = 0; i < p.size; i++) {
        const g = p.grad[i];
        m[i] = this.beta1 * m[i] + (1 - this.beta1) * g;
        v[i] = this.beta2 * v[i] + (1 - this.beta2) * g * g;
        p.data[i] -= this.lr * (m[i] / bc1) / (Math.sqrt(v[i] / bc2) + this.eps);
      }
    }
  }
}

export function zeroGrads(params: Params): void {
  for (const p of params.values()) p.grad = null;
}

export interface IterationLog {
  epoch: number;
  iteration: number;
  imageIds: number[];
  dinoLoss: number;
  ibotLoss: number;
  totalLoss: number;
}

export interface PretrainResult {
  student: Params;
  teacher: Params;
  studentHead: Params;
  teacherHead: Params;
  log: IterationLog[];
  samplingLog: number[][];   // image ids visited, per epoch
}

export interface PretrainOutcome {
  result: PretrainResult;
  epochMeanLoss: number[];
  diverged: boolean;
}

function detachedLogits(head: Params, x: Tensor): Float64Array {
  const frozen = new Tensor(x.data.slice(), x.rows, x.cols, false);
  return Float64Array.from(headForward(frozen, head).data);
}

function sumTerms(terms: Tensor[]): Tensor {
  let acc = terms[0];
  for (let i = 1; i < terms.length; i++) acc = add(acc, terms[i]);
  return acc;
}

/** Full pretraining loop; on a non-finite loss the last finite state is kept. */
export function pretrain(dataset: Slice[], cfg: TrainerConfig,
                         ckpt?: Params): PretrainOutcome {
  const enc = encoderConfig(cfg);
  const base = ckpt ?? initEncoderParams(enc, cfg.seed);
  const { student, teacher } = initFromCheckpoint(base, cfg);
  const headCfg: HeadConfig = { dim: cfg.dim, hidden: cfg.headHidden,
                                prototypes: cfg.prototypes };
  const studentHead = initHeadParams(headCfg, cfg.seed + 77);
  const teacherHead = cloneParams(studentHead);
  for (const t of teacherHead.values()) t.requiresGrad = false;

  const rng = new Rng(cfg.seed);
  const adam = new Adam(cfg.baseLr);
  const center = new Float64Array(cfg.prototypes);
  const patchCenter = new Float64Array(cfg.prototypes);
  const nTokens = tokensPerSide(enc) ** 2;
  const log: IterationLog[] = [];
  const samplingLog: number[][] = [];
  const epochMeanLoss: number[] = [];
  const globalCrop: CropConfig = { ...defaultCrop, minScale: 0.6 };
  const localCrop: CropConfig = { ...defaultCrop, minScale: 0.2, maxScale: 0.5 };

  let lastGood: StudentTeacher = { student: cloneParams(student),
                                   teacher: cloneParams(teacher) };
  let diverged = false;

  for (let epoch = 0; epoch < cfg.epochs && !diverged; epoch++) {
    const order = samplingOrder(dataset.length, cfg.sampling, rng);
    samplingLog.push(order.slice());
    const epochLosses: number[] = [];
    for (let start = 0; start < order.length; start += cfg.batchSize) {
      const batch = order.slice(start, start + cfg.batchSize);
      const perImage: {
        teacherCls: Float64Array[];
        studentCls: Tensor[];
        studentMasked: Tensor;
        teacherMasked: Float64Array;
        nMasked: number;
      }[] = [];

      for (const id of batch) {
        const image = dataset[id].image;
        const globals = [
          augment(image, cfg.imageSize, rng, globalCrop).image,
          augment(image, cfg.imageSize, rng, globalCrop).image,
        ];
        const locals = Array.from({ length: cfg.nLocalCrops },
          () => augment(image, cfg.imageSize, rng, localCrop).image);

        const teacherOut = globals.map((g) => encode(g, enc, teacher));
        const teacherCls = teacherOut.map((o) => detachedLogits(teacherHead, o.cls));
        const studentCls = [...globals, ...locals].map(
          (c) => headForward(encode(c, enc, student).cls, studentHead));

        const nMask = Math.max(1, Math.round(cfg.maskRatio * nTokens));
        const maskedIdx: number[] = [];
        while (maskedIdx.length < nMask) {
          const c = rng.int(nTokens);
          if (!maskedIdx.includes(c)) maskedIdx.push(c);
        }
        maskedIdx.sort((a, b) => a - b);
        const sMasked = encode(globals[0], enc, student, maskedIdx);
        const studentMasked = headForward(gatherRows(sMasked.patches, maskedIdx),
                                          studentHead);
        const teacherMasked = detachedLogits(
          teacherHead, gatherRows(teacherOut[0].patches, maskedIdx));
        perImage.push({ teacherCls, studentCls, studentMasked, teacherMasked,
                        nMasked: maskedIdx.length });
      }

      // batch-level centering from the raw teacher logits
      const clsRows = perImage.flatMap((p) => p.teacherCls);
      updateCenter(center, concat(clsRows), clsRows.length, cfg.prototypes,
                   cfg.centerMomentum);
      const patchRows = perImage.map((p) => p.teacherMasked);
      const patchFlat = concat(patchRows);
      updateCenter(patchCenter, patchFlat, patchFlat.length / cfg.prototypes,
                   cfg.prototypes, cfg.centerMomentum);

      const terms: Tensor[] = [];
      let dinoAcc = 0;
      let ibotAcc = 0;
      for (const img of perImage) {
        const targets = img.teacherCls.map((logits) => teacherProbs(
          logits, 1, cfg.prototypes, center, cfg.tempTeacher));
        const pairTerms: Tensor[] = [];
        for (let g = 0; g < 2; g++) {
          for (let c = 0; c < img.studentCls.length; c++) {
            if (c === g) continue;   // teacher never supervises its own view
            pairTerms.push(distillationLoss(img.studentCls[c], targets[g],
                                            cfg.tempStudent));
          }
        }
        const dinoTerm = scale(sumTerms(pairTerms), 1 / pairTerms.length);
        dinoAcc += dinoTerm.data[0];
        terms.push(scale(dinoTerm, cfg.dinoWeight));

        const probs = teacherProbs(img.teacherMasked, img.nMasked, cfg.prototypes,
                                   patchCenter, cfg.tempTeacher);
        const ibotTerm = distillationLoss(img.studentMasked, probs, cfg.tempStudent);
        ibotAcc += ibotTerm.data[0];
        terms.push(scale(ibotTerm, cfg.ibotWeight));
      }

      const total = scale(sumTerms(terms), 1 / batch.length);
      if (!Number.isFinite(total.data[0])) {
        diverged = true;
        break;
      }
      zeroGrads(student);
      zeroGrads(studentHead);
      total.backward();
      adam.step(student);
      adam.step(studentHead);
      emaUpdate(teacher, student, cfg.emaMomentum);
      emaUpdate(teacherHead, studentHead, cfg.emaMomentum);
      lastGood = { student: cloneParams(student), teacher: cloneParams(teacher) };

      epochLosses.push(total.data[0]);
      log.push({
        epoch,
        iteration: log.length,
        imageIds: batch,
        dinoLoss: dinoAcc / batch.length,
        ibotLoss: ibotAcc / batch.length,
        totalLoss: total.data[0],
      });
    }
    if (epochLosses.length) {
      epochMeanLoss.push(epochLosses.reduce((a, b) => a + b, 0) / epochLosses.length);
    }
  }

  const state = diverged ? lastGood : { student, teacher };
  return {
    result: {
      student: state.student,
      teacher: state.teacher,
      studentHead,
      teacherHead,
      log,
      samplingLog,
    },
    epochMeanLoss,
    diverged,
  };
}

function concat(rows: Float64Array[]): Float64Array {
  const out = new Float64Array(rows.reduce((s, r) => s + r.length, 0));
  let off = 0;
  for (const r of rows) {
    out.set(r, off);
    off += r.length;
  }
  return out;
}
