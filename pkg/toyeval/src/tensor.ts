// Minimal float64 reverse-mode autodiff over dense tensors.
// A module-level tape collects backward closures; backward() replays it in reverse.

export class Tensor {
  data: Float64Array;
  shape: number[];
  grad: Float64Array;

  constructor(data: Float64Array, shape: number[]) {
    this.data = data;
    this.shape = shape;
    this.grad = new Float64Array(data.length);
  }

  get size(): number {
    return this.data.length;
  }

  zeroGrad(): void {
    this.grad.fill(0);
  }
}

export function zeros(shape: number[]): Tensor {
  const n = shape.reduce((a, b) => a * b, 1);
  return new Tensor(new Float64Array(n), shape);
}

export function fromArray(values: number[] | Float64Array, shape: number[]): Tensor {
  const n = shape.reduce((a, b) => a * b, 1);
  if (values.length !== n) throw new Error(`value count ${values.length} does not match shape ${shape}`);
  return new Tensor(Float64Array.from(values), shape);
}

let tape: Array<() => void> = [];
let recording = true;

function record(fn: () => void): void {
  if (recording) tape.push(fn);
}

export function clearTape(): void {
  tape = [];
}

/** Run fn with gradient recording disabled (eval-mode forward passes). */
export function noGrad<T>(fn: () => T): T {
  const prev = recording;
  recording = false;
  try {
    return fn();
  } finally {
    recording = prev;
  }
}

/** Seed d(loss)/d(loss)=1 and propagate through every recorded op, then drop the tape. */
export function backward(loss: Tensor): void {
  if (loss.size !== 1) throw new Error("backward expects a scalar loss");
  loss.grad[0] = 1;
  for (let i = tape.length - 1; i >= 0; i--) tape[i]();
  tape = [];
}

export function add(a: Tensor, b: Tensor): Tensor {
  if (a.size !== b.size) throw new Error("add: size mismatch");
  const out = zeros(a.shape);
  for (let i = 0; i < a.size; i++) out.data[i] = a.data[i] + b.data[i];
  record(() => {
    for (let i = 0; i < a.size; i++) {
      a.grad[i] += out.grad[i];
      b.grad[i] += out.grad[i];
    }
  });
  return out;
}

export function scale(a: Tensor, s: number): Tensor {
  const out = zeros(a.shape);
  for (let i = 0; i < a.size; i++) out.data[i] = a.data[i] * s;
  record(() => {
    for (let i = 0; i < a.size; i++) a.grad[i] += s * out.grad[i];
  });
  return out;
}

export function relu(a: Tensor): Tensor {
  const out = zeros(a.shape);
  // x * 0 + 0 keeps NaN/Inf visible instead of silently clamping them to zero
  for (let i = 0; i < a.size; i++) {
    const v = a.data[i];
    out.data[i] = v > 0 ? v : v * 0 + 0;
  }
  record(() => {
    for (let i = 0; i < a.size; i++) if (a.data[i] > 0) a.grad[i] += out.grad[i];
  });
  return out;
}

export function matmul(a: Tensor, b: Tensor): Tensor {
  const [m, k] = a.shape;
  const [k2, n] = b.shape;
  if (k !== k2) throw new Error(`matmul: inner dims ${k} vs ${k2}`);
  const out = zeros([m, n]);
  const ad = a.data, bd = b.data, od = out.data;
  for (let i = 0; i < m; i++) {
    for (let p = 0; p < k; p++) {
      const av = ad[i * k + p];
      if (av === 0) continue;
      const bBase = p * n;
      const oBase = i * n;
      for (let j = 0; j < n; j++) od[oBase + j] += av * bd[bBase + j];
    }
  }
  record(() => {
    const og = out.grad, ag = a.grad, bg = b.grad;
    for (let i = 0; i < m; i++) {
      for (let p = 0; p < k; p++) {
        let s = 0;
        const bBase = p * n;
        const oBase = i * n;
        for (let j = 0; j < n; j++) s += og[oBase + j] * bd[bBase + j];
        ag[i * k + p] += s;
      }
    }
    for (let p = 0; p < k; p++) {
      for (let i = 0; i < m; i++) {
        const av = ad[i * k + p];
        if (av === 0) continue;
        const oBase = i * n;
        const bBase = p * n;
        for (let j = 0; j < n; j++) bg[bBase + j] += av * og[oBase + j];
      }
    }
  });
  return out;
}

export function transpose(a: Tensor): Tensor {
  const [m, n] = a.shape;
  const out = zeros([n, m]);
  for (let i = 0; i < m; i++) for (let j = 0; j < n; j++) out.data[j * m + i] = a.data[i * n + j];
  record(() => {
    for (let i = 0; i < m; i++) for (let j = 0; j < n; j++) a.grad[i * n + j] += out.grad[j * m + i];
  });
  return out;
}

/** 2d convolution, NCHW single image: x [Cin,H,W], w [Cout,Cin,kh,kw]. No bias. */
export function conv2d(x: Tensor, w: Tensor, stride: number, pad: number): Tensor {
  const [cIn, h, wd] = x.shape;
  const [cOut, cIn2, kh, kw] = w.shape;
  if (cIn !== cIn2) throw new Error(`conv2d: channel mismatch ${cIn} vs ${cIn2}`);
  const oh = Math.floor((h + 2 * pad - kh) / stride) + 1;
  const ow = Math.floor((wd + 2 * pad - kw) / stride) + 1;
  const out = zeros([cOut, oh, ow]);
  const xd = x.data, wdat = w.data, od = out.data;
  // valid tap ranges per output coordinate, so the inner loops stay branch-free
  const ky0 = new Int32Array(oh), ky1 = new Int32Array(oh);
  for (let oy = 0; oy < oh; oy++) {
    const iy0 = oy * stride - pad;
    ky0[oy] = Math.max(0, -iy0);
    ky1[oy] = Math.min(kh, h - iy0);
  }
  const kx0 = new Int32Array(ow), kx1 = new Int32Array(ow);
  for (let ox = 0; ox < ow; ox++) {
    const ix0 = ox * stride - pad;
    kx0[ox] = Math.max(0, -ix0);
    kx1[ox] = Math.min(kw, wd - ix0);
  }
  for (let oc = 0; oc < cOut; oc++) {
    for (let oy = 0; oy < oh; oy++) {
      const iy0 = oy * stride - pad;
      for (let ox = 0; ox < ow; ox++) {
        const ix0 = ox * stride - pad;
        let acc = 0;
        for (let ic = 0; ic < cIn; ic++) {
          const xBase = ic * h * wd + ix0;
          const wBase = ((oc * cIn + ic) * kh) * kw;
          for (let ky = ky0[oy]; ky < ky1[oy]; ky++) {
            const xRow = xBase + (iy0 + ky) * wd;
            const wRow = wBase + ky * kw;
            for (let kx = kx0[ox]; kx < kx1[ox]; kx++) {
              acc += xd[xRow + kx] * wdat[wRow + kx];
            }
          }
        }
        od[(oc * oh + oy) * ow + ox] = acc;
      }
    }
  }
  record(() => {
    const og = out.grad, xg = x.grad, wg = w.grad;
    for (let oc = 0; oc < cOut; oc++) {
      for (let oy = 0; oy < oh; oy++) {
        const iy0 = oy * stride - pad;
        for (let ox = 0; ox < ow; ox++) {
          const d = og[(oc * oh + oy) * ow + ox];
          if (d === 0) continue;
          const ix0 = ox * stride - pad;
          for (let ic = 0; ic < cIn; ic++) {
            const xBase = ic * h * wd + ix0;
            const wBase = ((oc * cIn + ic) * kh) * kw;
            for (let ky = ky0[oy]; ky < ky1[oy]; ky++) {
              const xRow = xBase + (iy0 + ky) * wd;
              const wRow = wBase + ky * kw;
              for (let kx = kx0[ox]; kx < kx1[ox]; kx++) {
                xg[xRow + kx] += wdat[wRow + kx] * d;
                wg[wRow + kx] += xd[xRow + kx] * d;
              }
            }
          }
        }
      }
    }
  });
  return out;
}

interface ResamplePlan {
  i0: Int32Array;
  i1: Int32Array;
  frac: Float64Array;
}

function resampleAxis(src: number, dst: number): ResamplePlan {
  const i0 = new Int32Array(dst);
  const i1 = new Int32Array(dst);
  const frac = new Float64Array(dst);
  const s = src / dst;
  for (let o = 0; o < dst; o++) {
    let pos = (o + 0.5) * s - 0.5;
    if (pos < 0) pos = 0;
    if (pos > src - 1) pos = src - 1;
    const lo = Math.floor(pos);
    i0[o] = lo;
    i1[o] = Math.min(lo + 1, src - 1);
    frac[o] = pos - lo;
  }
  return { i0, i1, frac };
}

/** Bilinear resize of [C,H,W] to [C,oh,ow]; half-pixel centers, edges clamped. */
export function bilinearResize(x: Tensor, oh: number, ow: number): Tensor {
  const [c, h, w] = x.shape;
  if (h === oh && w === ow) return x;
  const ry = resampleAxis(h, oh);
  const rx = resampleAxis(w, ow);
  const out = zeros([c, oh, ow]);
  const xd = x.data, od = out.data;
  for (let ch = 0; ch < c; ch++) {
    const base = ch * h * w;
    const oBase = ch * oh * ow;
    for (let oy = 0; oy < oh; oy++) {
      const y0 = base + ry.i0[oy] * w;
      const y1 = base + ry.i1[oy] * w;
      const fy = ry.frac[oy];
      for (let ox = 0; ox < ow; ox++) {
        const x0 = rx.i0[ox], x1 = rx.i1[ox];
        const fx = rx.frac[ox];
        const top = xd[y0 + x0] * (1 - fx) + xd[y0 + x1] * fx;
        const bot = xd[y1 + x0] * (1 - fx) + xd[y1 + x1] * fx;
        od[oBase + oy * ow + ox] = top * (1 - fy) + bot * fy;
      }
    }
  }
  record(() => {
    const og = out.grad, xg = x.grad;
    for (let ch = 0; ch < c; ch++) {
      const base = ch * h * w;
      const oBase = ch * oh * ow;
      for (let oy = 0; oy < oh; oy++) {
        const y0 = base + ry.i0[oy] * w;
        const y1 = base + ry.i1[oy] * w;
        const fy = ry.frac[oy];
        for (let ox = 0; ox < ow; ox++) {
          const d = og[oBase + oy * ow + ox];
          if (d === 0) continue;
          const x0 = rx.i0[ox], x1 = rx.i1[ox];
          const fx = rx.frac[ox];
          xg[y0 + x0] += d * (1 - fy) * (1 - fx);
          xg[y0 + x1] += d * (1 - fy) * fx;
          xg[y1 + x0] += d * fy * (1 - fx);
          xg[y1 + x1] += d * fy * fx;
        }
      }
    }
  });
  return out;
}

/** Concatenate [Ci,H,W] tensors along the channel axis. */
export function concatChannels(parts: Tensor[]): Tensor {
  if (parts.length === 1) return parts[0];
  const [, h, w] = parts[0].shape;
  let cTotal = 0;
  for (const p of parts) {
    if (p.shape[1] !== h || p.shape[2] !== w) throw new Error("concatChannels: spatial mismatch");
    cTotal += p.shape[0];
  }
  const out = zeros([cTotal, h, w]);
  let off = 0;
  for (const p of parts) {
    out.data.set(p.data, off);
    off += p.size;
  }
  record(() => {
    let o = 0;
    for (const p of parts) {
      for (let i = 0; i < p.size; i++) p.grad[i] += out.grad[o + i];
      o += p.size;
    }
  });
  return out;
}

/** [C,H,W] -> [H*W, C] token matrix. */
export function toTokens(x: Tensor): Tensor {
  const [c, h, w] = x.shape;
  const n = h * w;
  const out = zeros([n, c]);
  for (let ch = 0; ch < c; ch++) {
    const base = ch * n;
    for (let i = 0; i < n; i++) out.data[i * c + ch] = x.data[base + i];
  }
  record(() => {
    for (let ch = 0; ch < c; ch++) {
      const base = ch * n;
      for (let i = 0; i < n; i++) x.grad[base + i] += out.grad[i * c + ch];
    }
  });
  return out;
}

/** [H*W, C] token matrix -> [C,H,W]. */
export function fromTokens(t: Tensor, h: number, w: number): Tensor {
  const [n, c] = t.shape;
  if (n !== h * w) throw new Error("fromTokens: token count mismatch");
  const out = zeros([c, h, w]);
  for (let ch = 0; ch < c; ch++) {
    const base = ch * n;
    for (let i = 0; i < n; i++) out.data[base + i] = t.data[i * c + ch];
  }
  record(() => {
    for (let ch = 0; ch < c; ch++) {
      const base = ch * n;
      for (let i = 0; i < n; i++) t.grad[i * c + ch] += out.grad[base + i];
    }
  });
  return out;
}

export function softmaxRows(a: Tensor): Tensor {
  const [n, m] = a.shape;
  const out = zeros([n, m]);
  for (let i = 0; i < n; i++) {
    const base = i * m;
    let mx = -Infinity;
    for (let j = 0; j < m; j++) if (a.data[base + j] > mx) mx = a.data[base + j];
    let sum = 0;
    for (let j = 0; j < m; j++) {
      const e = Math.exp(a.data[base + j] - mx);
      out.data[base + j] = e;
      sum += e;
    }
    for (let j = 0; j < m; j++) out.data[base + j] /= sum;
  }
  record(() => {
    for (let i = 0; i < n; i++) {
      const base = i * m;
      let dot = 0;
      for (let j = 0; j < m; j++) dot += out.grad[base + j] * out.data[base + j];
      for (let j = 0; j < m; j++) a.grad[base + j] += (out.grad[base + j] - dot) * out.data[base + j];
    }
  });
  return out;
}

export interface NormStats {
  mean: Float64Array;
  variance: Float64Array;
}

/** Per-channel normalization over spatial positions using batch statistics. Non-affine. */
export function channelNormTrain(x: Tensor, eps: number): { out: Tensor; stats: NormStats } {
  const [c, h, w] = x.shape;
  const n = h * w;
  const mean = new Float64Array(c);
  const variance = new Float64Array(c);
  const out = zeros(x.shape);
  for (let ch = 0; ch < c; ch++) {
    const base = ch * n;
    let s = 0;
    for (let i = 0; i < n; i++) s += x.data[base + i];
    const mu = s / n;
    let v = 0;
    for (let i = 0; i < n; i++) {
      const d = x.data[base + i] - mu;
      v += d * d;
    }
    const va = v / n;
    mean[ch] = mu;
    variance[ch] = va;
    const inv = 1 / Math.sqrt(va + eps);
    for (let i = 0; i < n; i++) out.data[base + i] = (x.data[base + i] - mu) * inv;
  }
  record(() => {
    for (let ch = 0; ch < c; ch++) {
      const base = ch * n;
      const inv = 1 / Math.sqrt(variance[ch] + eps);
      let sumDy = 0;
      let sumDyXhat = 0;
      for (let i = 0; i < n; i++) {
        sumDy += out.grad[base + i];
        sumDyXhat += out.grad[base + i] * out.data[base + i];
      }
      for (let i = 0; i < n; i++) {
        const dy = out.grad[base + i];
        x.grad[base + i] += (inv / n) * (n * dy - sumDy - out.data[base + i] * sumDyXhat);
      }
    }
  });
  return { out, stats: { mean, variance } };
}

/** Per-channel normalization with fixed statistics (eval mode). */
export function channelNormEval(x: Tensor, mean: Float64Array, variance: Float64Array, eps: number): Tensor {
  const [c, h, w] = x.shape;
  const n = h * w;
  const out = zeros(x.shape);
  for (let ch = 0; ch < c; ch++) {
    const base = ch * n;
    const inv = 1 / Math.sqrt(variance[ch] + eps);
    for (let i = 0; i < n; i++) out.data[base + i] = (x.data[base + i] - mean[ch]) * inv;
  }
  record(() => {
    for (let ch = 0; ch < c; ch++) {
      const base = ch * n;
      const inv = 1 / Math.sqrt(variance[ch] + eps);
      for (let i = 0; i < n; i++) x.grad[base + i] += inv * out.grad[base + i];
    }
  });
  return out;
}

/** Mean cross-entropy of row logits [N,K] against integer labels. */
export function crossEntropyMean(logits: Tensor, labels: Int32Array): Tensor {
  const [n, k] = logits.shape;
  if (labels.length !== n) throw new Error("crossEntropyMean: label count mismatch");
  const probs = new Float64Array(n * k);
  let loss = 0;
  for (let i = 0; i < n; i++) {
    const base = i * k;
    let mx = -Infinity;
    for (let j = 0; j < k; j++) if (logits.data[base + j] > mx) mx = logits.data[base + j];
    let sum = 0;
    for (let j = 0; j < k; j++) {
      const e = Math.exp(logits.data[base + j] - mx);
      probs[base + j] = e;
      sum += e;
    }
    for (let j = 0; j < k; j++) probs[base + j] /= sum;
    loss += Math.log(sum) + mx - logits.data[base + labels[i]];
  }
  const out = fromArray([loss / n], [1]);
  record(() => {
    const d = out.grad[0] / n;
    for (let i = 0; i < n; i++) {
      const base = i * k;
      for (let j = 0; j < k; j++) {
        logits.grad[base + j] += d * (probs[base + j] - (j === labels[i] ? 1 : 0));
      }
    }
  });
  return out;
}

/** Scalar projection sum(a * weights); handy for gradient checks. */
export function weightedSum(a: Tensor, weights: Float64Array): Tensor {
  if (weights.length !== a.size) throw new Error("weightedSum: weight count mismatch");
  let s = 0;
  for (let i = 0; i < a.size; i++) s += a.data[i] * weights[i];
  const out = fromArray([s], [1]);
  record(() => {
    for (let i = 0; i < a.size; i++) a.grad[i] += weights[i] * out.grad[0];
  });
  return out;
}

export function argmaxRows(a: Tensor): Int32Array {
  const [n, m] = a.shape;
  const out = new Int32Array(n);
  for (let i = 0; i < n; i++) {
    const base = i * m;
    let best = 0;
    for (let j = 1; j < m; j++) if (a.data[base + j] > a.data[base + best]) best = j;
    out[i] = best;
  }
  return out;
}

export class Adam {
  private m: Float64Array[];
  private v: Float64Array[];
  private t = 0;

  constructor(
    readonly params: Tensor[],
    readonly lr: number,
    readonly beta1 = 0.9,
    readonly beta2 = 0.999,
    readonly eps = 1e-8,
  ) {
    this.m = params.map((p) => new Float64Array(p.size));
    this.v = params.map((p) => new Float64Array(p.size));
  }

  zeroGrad(): void {
    for (const p of this.params) p.zeroGrad();
  }

  step(): void {
    this.t += 1;
    const c1 = 1 - Math.pow(this.beta1, this.t);
    const c2 = 1 - Math.pow(this.beta2, this.t);
    for (let pi = 0; pi < this.params.length; pi++) {
      const p = this.params[pi];
      const m = this.m[pi];
      const v = this.v[pi];
      for (let i = 0; i < p.size; i++) {
        const g = p.grad[i];
        m[i] = this.beta1 * m[i] + (1 - this.beta1) * g;
        v[i] = this.beta2 * v[i] + (1 - this.beta2) * g * g;
        p.data[i] -= (this.lr * (m[i] / c1)) / (Math.sqrt(v[i] / c2) + this.eps);
      }
    }
  }
}
