/**
 * Student-teacher self-distillation pieces: prototype heads, the sharpened
 * and centered teacher targets, the cross-entropy losses over prototype
 * distributions, and the EMA teacher update.
 */

import { Params } from "./nn.js";
import { Rng } from "./rng.js";
import {
  Tensor, add, addBias, gelu, logSoftmaxRows, matmul, mulElem, scale, sumAll,
} from "./tensor.js";

export interface HeadConfig {
  dim: number;
  hidden: number;
  prototypes: number;
}

export function initHeadParams(cfg: HeadConfig, seed: number, prefix = "head."): Params {
  const rng = new Rng(seed);
  const params: Params = new Map();
  const mk = (name: string, rows: number, cols: number, std: number) => {
    const t = Tensor.zeros(rows, cols, true);
    for (let i = 0; i < t.size; i++) t.data[i] = rng.gauss() * std;
    params.set(prefix + name, t);
  };
  mk("W1", cfg.dim, cfg.hidden, 1 / Math.sqrt(cfg.dim));
  mk("b1", 1, cfg.hidden, 0);
  mk("W2", cfg.hidden, cfg.prototypes, 1 / Math.sqrt(cfg.hidden));
  mk("b2", 1, cfg.prototypes, 0);
  return params;
}

export function headForward(x: Tensor, params: Params, prefix = "head."): Tensor {
  const h = gelu(addBias(matmul(x, params.get(prefix + "W1")!), params.get(prefix + "b1")!));
  return addBias(matmul(h, params.get(prefix + "W2")!), params.get(prefix + "b2")!);
}

/**
 * Teacher target distribution: softmax((logits - center) / tempT), computed
 * outside the autograd graph (teacher receives no gradient).
 */
export function teacherProbs(logits: Float64Array, rows: number, cols: number,
                             center: Float64Array, tempT: number): Float64Array {
  const probs = new Float64Array(rows * cols);
  for (let r = 0; r < rows; r++) {
    let max = -Infinity;
    for (let c = 0; c < cols; c++) {
      const v = (logits[r * cols + c] - center[c]) / tempT;
      probs[r * cols + c] = v;
      max = Math.max(max, v);
    }
    let sum = 0;
    for (let c = 0; c < cols; c++) {
      const e = Math.exp(probs[r * cols + c] - max);
      probs[r * cols + c] = e;
      sum += e;
    }
    for (let c = 0; c < cols; c++) probs[r * cols + c] /= sum;
  }
  return probs;
}

/** center <- m*center + (1-m)*batchMean(teacher logits). */
export function updateCenter(center: Float64Array, logits: Float64Array,
                             rows: number, cols: number, momentum: number): void {
  for (let c = 0; c < cols; c++) {
    let mean = 0;
    for (let r = 0; r < rows; r++) mean += logits[r * cols + c];
    mean /= rows;
    center[c] = momentum * center[c] + (1 - momentum) * mean;
  }
}

/**
 * Cross-entropy between fixed teacher target rows and the student's
 * prototype distribution: mean over rows of -sum p * log softmax(s/tempS).
 */
export function distillationLoss(studentLogits: Tensor, targets: Float64Array,
                                 tempS: number): Tensor {
  const logp = logSoftmaxRows(scale(studentLogits, 1 / tempS));
  const p = new Tensor(Float64Array.from(targets), studentLogits.rows, studentLogits.cols);
  const perEntry = mulElem(logp, p);
  return scale(sumAll(perEntry), -1 / studentLogits.rows);
}

/** theta_teacher <- m*theta_teacher + (1-m)*theta_student, elementwise. */
export function emaUpdate(teacher: Params, student: Params, m: number): void {
  if (teacher.size !== student.size) throw new Error("parameter trees differ in size");
  for (const [name, t] of teacher) {
    const s = student.get(name);
    if (!s || s.size !== t.size) throw new Error(`parameter tree mismatch at ${name}`);
    for (let i = 0; i < t.size; i++) t.data[i] = m * t.data[i] + (1 - m) * s.data[i];
  }
}

/** Binary soft dice loss over sigmoid probabilities (plus BCE for slope). */
export function segmentationLoss(probs: Tensor, target: Float64Array): Tensor {
  const t = new Tensor(Float64Array.from(target), probs.rows, probs.cols);
  const inter = sumAll(mulElem(probs, t));
  const total = sumAll(probs);
  let tsum = 0;
  for (const v of target) tsum += v;
  const dice = scaleByReciprocal(scale(inter, 2), total, tsum + 1e-6);
  const one = new Tensor(Float64Array.of(1), 1, 1);
  return add(add(one, scale(dice, -1)), scale(bce(probs, target), 0.1));
}

/** numerator / (denomTensor + denomConst), scalar tensors. */
function scaleByReciprocal(num: Tensor, denom: Tensor, denomConst: number): Tensor {
  const y = Tensor.zeros(1, 1, num.requiresGrad || denom.requiresGrad);
  y.parents = [num, denom].filter((p) => p.requiresGrad);
  const d = denom.data[0] + denomConst;
  y.data[0] = num.data[0] / d;
  y.backwardFn = () => {
    const g = y.grad![0];
    if (num.requiresGrad) num.ensureGrad()[0] += g / d;
    if (denom.requiresGrad) denom.ensureGrad()[0] += -g * num.data[0] / (d * d);
  };
  return y;
}

function bce(probs: Tensor, target: Float64Array): Tensor {
  const eps = 1e-7;
  const y = Tensor.zeros(1, 1, probs.requiresGrad);
  y.parents = probs.requiresGrad ? [probs] : [];
  let loss = 0;
  for (let i = 0; i < probs.size; i++) {
    const p = Math.min(Math.max(probs.data[i], eps), 1 - eps);
    loss -= target[i] * Math.log(p) + (1 - target[i]) * Math.log(1 - p);
  }
  y.data[0] = loss / probs.size;
  y.backwardFn = () => {
    if (!probs.requiresGrad) return;
    const g = y.grad![0];
    const gp = probs.ensureGrad();
    for (let i = 0; i < probs.size; i++) {
      const p = Math.min(Math.max(probs.data[i], eps), 1 - eps);
      gp[i] += g * (-target[i] / p + (1 - target[i]) / (1 - p)) / probs.size;
    }
  };
  return y;
}
