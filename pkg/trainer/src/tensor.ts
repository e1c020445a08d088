/**
 * Minimal reverse-mode autograd over Float64Array, shaped for the tiny
 * transformer this harness trains. Tensors are 2-D (rows, cols) unless
 * noted; double precision keeps finite-difference gradient checks tight.
 */

export class Tensor {
  data: Float64Array;
  rows: number;
  cols: number;
  grad: Float64Array | null = null;
  requiresGrad: boolean;
  backwardFn: (() => void) | null = null;
  parents: Tensor[] = [];

  constructor(data: Float64Array, rows: number, cols: number, requiresGrad = false) {
    if (data.length !== rows * cols) {
      throw new Error(`data length ${data.length} != ${rows}x${cols}`);
    }
    this.data = data;
    this.rows = rows;
    this.cols = cols;
    this.requiresGrad = requiresGrad;
  }

  static zeros(rows: number, cols: number, requiresGrad = false): Tensor {
    return new Tensor(new Float64Array(rows * cols), rows, cols, requiresGrad);
  }

  static from(values: number[] | Float64Array, rows: number, cols: number,
              requiresGrad = false): Tensor {
    return new Tensor(Float64Array.from(values), rows, cols, requiresGrad);
  }

  get size(): number {
    return this.rows * this.cols;
  }

  at(r: number, c: number): number {
    return this.data[r * this.cols + c];
  }

  clone(): Tensor {
    return new Tensor(this.data.slice(), this.rows, this.cols, this.requiresGrad);
  }

  ensureGrad(): Float64Array {
    if (!this.grad) this.grad = new Float64Array(this.size);
    return this.grad;
  }

  /** Reverse-mode sweep from this scalar (1x1) tensor. */
  backward(): void {
    if (this.size !== 1) throw new Error("backward() starts from a scalar");
    const topo: Tensor[] = [];
    const seen = new Set<Tensor>();
    const visit = (t: Tensor) => {
      if (seen.has(t)) return;
      seen.add(t);
      for (const p of t.parents) visit(p);
      topo.push(t);
    };
    visit(this);
    this.ensureGrad()[0] = 1.0;
    for (let i = topo.length - 1; i >= 0; i--) {
      topo[i].backwardFn?.();
    }
  }
}

function out(rows: number, cols: number, parents: Tensor[]): Tensor {
  const t = Tensor.zeros(rows, cols, parents.some((p) => p.requiresGrad));
  t.parents = parents.filter((p) => p.requiresGrad);
  return t;
}

export function add(a: Tensor, b: Tensor): Tensor {
  if (a.rows !== b.rows || a.cols !== b.cols) throw new Error("add: shape mismatch");
  const y = out(a.rows, a.cols, [a, b]);
  for (let i = 0; i < y.size; i++) y.data[i] = a.data[i] + b.data[i];
  y.backwardFn = () => {
    const g = y.grad!;
    if (a.requiresGrad) { const ga = a.ensureGrad(); for (let i = 0; i < g.length; i++) ga[i] += g[i]; }
    if (b.requiresGrad) { const gb = b.ensureGrad(); for (let i = 0; i < g.length; i++) gb[i] += g[i]; }
  };
  return y;
}

/** x: (n,d) plus row vector b: (1,d) broadcast over rows. */
export function addBias(x: Tensor, b: Tensor): Tensor {
  if (b.rows !== 1 || b.cols !== x.cols) throw new Error("addBias: bias must be (1, d)");
  const y = out(x.rows, x.cols, [x, b]);
  for (let r = 0; r < x.rows; r++) {
    for (let c = 0; c < x.cols; c++) y.data[r * x.cols + c] = x.data[r * x.cols + c] + b.data[c];
  }
  y.backwardFn = () => {
    const g = y.grad!;
    if (x.requiresGrad) { const gx = x.ensureGrad(); for (let i = 0; i < g.length; i++) gx[i] += g[i]; }
    if (b.requiresGrad) {
      const gb = b.ensureGrad();
      for (let r = 0; r < x.rows; r++) {
        for (let c = 0; c < x.cols; c++) gb[c] += g[r * x.cols + c];
      }
    }
  };
  return y;
}

export function sub(a: Tensor, b: Tensor): Tensor {
  return add(a, scale(b, -1));
}

export function scale(a: Tensor, s: number): Tensor {
  const y = out(a.rows, a.cols, [a]);
  for (let i = 0; i < y.size; i++) y.data[i] = a.data[i] * s;
  y.backwardFn = () => {
    if (!a.requiresGrad) return;
    const g = y.grad!;
    const ga = a.ensureGrad();
    for (let i = 0; i < g.length; i++) ga[i] += g[i] * s;
  };
  return y;
}

export function mulElem(a: Tensor, b: Tensor): Tensor {
  if (a.rows !== b.rows || a.cols !== b.cols) throw new Error("mulElem: shape mismatch");
  const y = out(a.rows, a.cols, [a, b]);
  for (let i = 0; i < y.size; i++) y.data[i] = a.data[i] * b.data[i];
  y.backwardFn = () => {
    const g = y.grad!;
    if (a.requiresGrad) { const ga = a.ensureGrad(); for (let i = 0; i < g.length; i++) ga[i] += g[i] * b.data[i]; }
    if (b.requiresGrad) { const gb = b.ensureGrad(); for (let i = 0; i < g.length; i++) gb[i] += g[i] * a.data[i]; }
  };
  return y;
}

export function matmul(a: Tensor, b: Tensor): Tensor {
  if (a.cols !== b.rows) throw new Error(`matmul: ${a.rows}x${a.cols} @ ${b.rows}x${b.cols}`);
  const y = out(a.rows, b.cols, [a, b]);
  const n = a.rows, k = a.cols, m = b.cols;
  for (let i = 0; i < n; i++) {
    for (let p = 0; p < k; p++) {
      const av = a.data[i * k + p];
      if (av === 0) continue;
      const brow = p * m;
      const yrow = i * m;
      for (let j = 0; j < m; j++) y.data[yrow + j] += av * b.data[brow + j];
    }
  }
  y.backwardFn = () => {
    const g = y.grad!;
    if (a.requiresGrad) {
      const ga = a.ensureGrad();
      for (let i = 0; i < n; i++) {
        for (let j = 0; j < m; j++) {
          const gv = g[i * m + j];
          if (gv === 0) continue;
          const brow = j;
          for (let p = 0; p < k; p++) ga[i * k + p] += gv * b.data[p * m + brow];
        }
      }
    }
    if (b.requiresGrad) {
      const gb = b.ensureGrad();
      for (let i = 0; i < n; i++) {
        for (let p = 0; p < k; p++) {
          const av = a.data[i * k + p];
          if (av === 0) continue;
          for (let j = 0; j < m; j++) gb[p * m + j] += av * g[i * m + j];
        }
      }
    }
  };
  return y;
}

export function transpose(a: Tensor): Tensor {
  const y = out(a.cols, a.rows, [a]);
  for (let r = 0; r < a.rows; r++) {
    for (let c = 0; c < a.cols; c++) y.data[c * a.rows + r] = a.data[r * a.cols + c];
  }
  y.backwardFn = () => {
    if (!a.requiresGrad) return;
    const g = y.grad!;
    const ga = a.ensureGrad();
    for (let r = 0; r < a.rows; r++) {
      for (let c = 0; c < a.cols; c++) ga[r * a.cols + c] += g[c * a.rows + r];
    }
  };
  return y;
}

/** Tanh-approximation GELU (the usual ViT flavor). */
export function gelu(a: Tensor): Tensor {
  const y = out(a.rows, a.cols, [a]);
  const c = Math.sqrt(2 / Math.PI);
  for (let i = 0; i < a.size; i++) {
    const x = a.data[i];
    y.data[i] = 0.5 * x * (1 + Math.tanh(c * (x + 0.044715 * x * x * x)));
  }
  y.backwardFn = () => {
    if (!a.requiresGrad) return;
    const g = y.grad!;
    const ga = a.ensureGrad();
    for (let i = 0; i < a.size; i++) {
      const x = a.data[i];
      const u = c * (x + 0.044715 * x * x * x);
      const t = Math.tanh(u);
      const du = c * (1 + 3 * 0.044715 * x * x);
      ga[i] += g[i] * (0.5 * (1 + t) + 0.5 * x * (1 - t * t) * du);
    }
  };
  return y;
}

export function sigmoid(a: Tensor): Tensor {
  const y = out(a.rows, a.cols, [a]);
  for (let i = 0; i < a.size; i++) y.data[i] = 1 / (1 + Math.exp(-a.data[i]));
  y.backwardFn = () => {
    if (!a.requiresGrad) return;
    const g = y.grad!;
    const ga = a.ensureGrad();
    for (let i = 0; i < a.size; i++) ga[i] += g[i] * y.data[i] * (1 - y.data[i]);
  };
  return y;
}

/** Row-wise softmax. */
export function softmaxRows(a: Tensor): Tensor {
  const y = out(a.rows, a.cols, [a]);
  for (let r = 0; r < a.rows; r++) {
    const off = r * a.cols;
    let max = -Infinity;
    for (let c = 0; c < a.cols; c++) max = Math.max(max, a.data[off + c]);
    let sum = 0;
    for (let c = 0; c < a.cols; c++) { y.data[off + c] = Math.exp(a.data[off + c] - max); sum += y.data[off + c]; }
    for (let c = 0; c < a.cols; c++) y.data[off + c] /= sum;
  }
  y.backwardFn = () => {
    if (!a.requiresGrad) return;
    const g = y.grad!;
    const ga = a.ensureGrad();
    for (let r = 0; r < a.rows; r++) {
      const off = r * a.cols;
      let dot = 0;
      for (let c = 0; c < a.cols; c++) dot += g[off + c] * y.data[off + c];
      for (let c = 0; c < a.cols; c++) ga[off + c] += y.data[off + c] * (g[off + c] - dot);
    }
  };
  return y;
}

/** Row-wise log-softmax. */
export function logSoftmaxRows(a: Tensor): Tensor {
  const y = out(a.rows, a.cols, [a]);
  const probs = new Float64Array(a.size);
  for (let r = 0; r < a.rows; r++) {
    const off = r * a.cols;
    let max = -Infinity;
    for (let c = 0; c < a.cols; c++) max = Math.max(max, a.data[off + c]);
    let sum = 0;
    for (let c = 0; c < a.cols; c++) sum += Math.exp(a.data[off + c] - max);
    const lse = max + Math.log(sum);
    for (let c = 0; c < a.cols; c++) {
      y.data[off + c] = a.data[off + c] - lse;
      probs[off + c] = Math.exp(y.data[off + c]);
    }
  }
  y.backwardFn = () => {
    if (!a.requiresGrad) return;
    const g = y.grad!;
    const ga = a.ensureGrad();
    for (let r = 0; r < a.rows; r++) {
      const off = r * a.cols;
      let rowSum = 0;
      for (let c = 0; c < a.cols; c++) rowSum += g[off + c];
      for (let c = 0; c < a.cols; c++) ga[off + c] += g[off + c] - probs[off + c] * rowSum;
    }
  };
  return y;
}

/** Layer normalization over the last dimension with gain/bias (1,d). */
export function layerNorm(x: Tensor, gain: Tensor, bias: Tensor, eps = 1e-5): Tensor {
  const d = x.cols;
  const y = out(x.rows, d, [x, gain, bias]);
  const means = new Float64Array(x.rows);
  const invstd = new Float64Array(x.rows);
  const xhat = new Float64Array(x.size);
  for (let r = 0; r < x.rows; r++) {
    const off = r * d;
    let m = 0;
    for (let c = 0; c < d; c++) m += x.data[off + c];
    m /= d;
    let v = 0;
    for (let c = 0; c < d; c++) { const dx = x.data[off + c] - m; v += dx * dx; }
    v /= d;
    means[r] = m;
    invstd[r] = 1 / Math.sqrt(v + eps);
    for (let c = 0; c < d; c++) {
      xhat[off + c] = (x.data[off + c] - m) * invstd[r];
      y.data[off + c] = xhat[off + c] * gain.data[c] + bias.data[c];
    }
  }
  y.backwardFn = () => {
    const g = y.grad!;
    if (gain.requiresGrad) {
      const gg = gain.ensureGrad();
      for (let r = 0; r < x.rows; r++) {
        for (let c = 0; c < d; c++) gg[c] += g[r * d + c] * xhat[r * d + c];
      }
    }
    if (bias.requiresGrad) {
      const gb = bias.ensureGrad();
      for (let r = 0; r < x.rows; r++) {
        for (let c = 0; c < d; c++) gb[c] += g[r * d + c];
      }
    }
    if (x.requiresGrad) {
      const gx = x.ensureGrad();
      for (let r = 0; r < x.rows; r++) {
        const off = r * d;
        let sumG = 0, sumGX = 0;
        for (let c = 0; c < d; c++) {
          const gh = g[off + c] * gain.data[c];
          sumG += gh;
          sumGX += gh * xhat[off + c];
        }
        for (let c = 0; c < d; c++) {
          const gh = g[off + c] * gain.data[c];
          gx[off + c] += invstd[r] * (gh - sumG / d - xhat[off + c] * sumGX / d);
        }
      }
    }
  };
  return y;
}

/** Sum of all entries as a 1x1 tensor. */
export function sumAll(a: Tensor): Tensor {
  const y = out(1, 1, [a]);
  let s = 0;
  for (let i = 0; i < a.size; i++) s += a.data[i];
  y.data[0] = s;
  y.backwardFn = () => {
    if (!a.requiresGrad) return;
    const g = y.grad![0];
    const ga = a.ensureGrad();
    for (let i = 0; i < a.size; i++) ga[i] += g;
  };
  return y;
}

export function meanAll(a: Tensor): Tensor {
  return scale(sumAll(a), 1 / a.size);
}

/** Select a subset of rows (used for masked-token losses). */
export function gatherRows(a: Tensor, indices: number[]): Tensor {
  const y = out(indices.length, a.cols, [a]);
  indices.forEach((src, dst) => {
    y.data.set(a.data.subarray(src * a.cols, (src + 1) * a.cols), dst * a.cols);
  });
  y.backwardFn = () => {
    if (!a.requiresGrad) return;
    const g = y.grad!;
    const ga = a.ensureGrad();
    indices.forEach((src, dst) => {
      for (let c = 0; c < a.cols; c++) ga[src * a.cols + c] += g[dst * a.cols + c];
    });
  };
  return y;
}

/** Vertically stack tensors that share a column count. */
export function concatRows(parts: Tensor[]): Tensor {
  const cols = parts[0].cols;
  const rows = parts.reduce((s, p) => s + p.rows, 0);
  const y = out(rows, cols, parts);
  let offset = 0;
  for (const p of parts) {
    y.data.set(p.data, offset);
    offset += p.size;
  }
  y.backwardFn = () => {
    const g = y.grad!;
    let off = 0;
    for (const p of parts) {
      if (p.requiresGrad) {
        const gp = p.ensureGrad();
        for (let i = 0; i < p.size; i++) gp[i] += g[off + i];
      }
      off += p.size;
    }
  };
  return y;
}

/**
 * Numeric gradient of scalarFn with respect to t, central differences.
 * Test helper; O(size) forward evaluations.
 */
export function numericGradient(t: Tensor, scalarFn: () => number, h = 1e-5): Float64Array {
  const g = new Float64Array(t.size);
  for (let i = 0; i < t.size; i++) {
    const keep = t.data[i];
    t.data[i] = keep + h;
    const up = scalarFn();
    t.data[i] = keep - h;
    const down = scalarFn();
    t.data[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}
