// Trainable building blocks. Parameter layouts deliberately mirror the
// engine's analytic counting: convolutions carry no bias and normalization
// carries no affine terms, so counted weights equal the analytic totals.

import { Rng } from "./rng.js";
import {
  Tensor,
  add,
  bilinearResize,
  channelNormEval,
  channelNormTrain,
  conv2d,
  fromTokens,
  matmul,
  relu,
  scale,
  softmaxRows,
  toTokens,
  transpose,
  zeros,
} from "./tensor.js";

export interface ForwardMode {
  train: boolean;
}

export interface OpModule {
  forward(x: Tensor, mode: ForwardMode): Tensor;
  parameters(): Tensor[];
}

function gaussian(shape: number[], std: number, rng: Rng): Tensor {
  const t = zeros(shape);
  for (let i = 0; i < t.size; i++) t.data[i] = rng.gauss() * std;
  return t;
}

export class Conv3x3 implements OpModule {
  w: Tensor;

  constructor(
    readonly cIn: number,
    readonly cOut: number,
    readonly stride: number,
    rng: Rng,
  ) {
    this.w = gaussian([cOut, cIn, 3, 3], Math.sqrt(2 / (9 * cIn)), rng);
  }

  forward(x: Tensor): Tensor {
    return conv2d(x, this.w, this.stride, 1);
  }

  parameters(): Tensor[] {
    return [this.w];
  }
}

export class Conv1x1 implements OpModule {
  w: Tensor;

  constructor(
    readonly cIn: number,
    readonly cOut: number,
    rng: Rng,
  ) {
    this.w = gaussian([cOut, cIn, 1, 1], Math.sqrt(2 / cIn), rng);
  }

  forward(x: Tensor): Tensor {
    return conv2d(x, this.w, 1, 0);
  }

  parameters(): Tensor[] {
    return [this.w];
  }
}

/** Strided 3x3 path at half resolution, resampled back up, plus a parallel
 *  full-resolution 1x1 path. Weight count: 9*cIn*cOut + cIn*cOut. */
export class LightweightConv implements OpModule {
  w3: Tensor;
  w1: Tensor;

  constructor(
    readonly cIn: number,
    readonly cOut: number,
    rng: Rng,
  ) {
    this.w3 = gaussian([cOut, cIn, 3, 3], Math.sqrt(2 / (9 * cIn)), rng);
    this.w1 = gaussian([cOut, cIn, 1, 1], Math.sqrt(2 / cIn), rng);
  }

  forward(x: Tensor): Tensor {
    const [, h, w] = x.shape;
    const coarse = conv2d(x, this.w3, 2, 1);
    const up = bilinearResize(coarse, h, w);
    const fine = conv2d(x, this.w1, 1, 0);
    return add(up, fine);
  }

  parameters(): Tensor[] {
    return [this.w3, this.w1];
  }
}

/** Channel-preserving global attention through a narrow bottleneck, with a
 *  1x1 bypass. Weight count: 2*c*d + 4*d*d + c*c. */
export class BottleneckAttention implements OpModule {
  wReduce: Tensor;
  wQ: Tensor;
  wK: Tensor;
  wV: Tensor;
  wOut: Tensor;
  wExpand: Tensor;
  wBypass: Tensor;

  constructor(
    readonly channels: number,
    readonly bottleneck: number,
    rng: Rng,
  ) {
    const c = channels;
    const d = bottleneck;
    this.wReduce = gaussian([c, d], Math.sqrt(1 / c), rng);
    this.wQ = gaussian([d, d], Math.sqrt(1 / d), rng);
    this.wK = gaussian([d, d], Math.sqrt(1 / d), rng);
    this.wV = gaussian([d, d], Math.sqrt(1 / d), rng);
    this.wOut = gaussian([d, d], Math.sqrt(1 / d), rng);
    this.wExpand = gaussian([d, c], Math.sqrt(1 / d), rng);
    this.wBypass = gaussian([c, c, 1, 1], Math.sqrt(2 / c), rng);
  }

  forward(x: Tensor): Tensor {
    const [, h, w] = x.shape;
    const tokens = toTokens(x);
    const z = matmul(tokens, this.wReduce);
    const q = matmul(z, this.wQ);
    const k = matmul(z, this.wK);
    const v = matmul(z, this.wV);
    const weights = softmaxRows(scale(matmul(q, transpose(k)), 1 / Math.sqrt(this.bottleneck)));
    const mixed = matmul(matmul(weights, v), this.wOut);
    const expanded = fromTokens(matmul(mixed, this.wExpand), h, w);
    const bypass = conv2d(x, this.wBypass, 1, 0);
    return add(expanded, bypass);
  }

  parameters(): Tensor[] {
    return [this.wReduce, this.wQ, this.wK, this.wV, this.wOut, this.wExpand, this.wBypass];
  }
}

/** Non-affine per-channel normalization with running statistics for eval. */
export class ChannelNorm {
  runningMean: Float64Array;
  runningVar: Float64Array;

  constructor(
    readonly channels: number,
    readonly momentum = 0.1,
    readonly eps = 1e-5,
  ) {
    this.runningMean = new Float64Array(channels);
    this.runningVar = new Float64Array(channels).fill(1);
  }

  reset(): void {
    this.runningMean.fill(0);
    this.runningVar.fill(1);
  }

  forward(x: Tensor, mode: ForwardMode): Tensor {
    if (!mode.train) return channelNormEval(x, this.runningMean, this.runningVar, this.eps);
    const { out, stats } = channelNormTrain(x, this.eps);
    for (let c = 0; c < this.channels; c++) {
      this.runningMean[c] = (1 - this.momentum) * this.runningMean[c] + this.momentum * stats.mean[c];
      this.runningVar[c] = (1 - this.momentum) * this.runningVar[c] + this.momentum * stats.variance[c];
    }
    return out;
  }
}

/** Op followed by normalization and a rectifier; the standard cell wrapper. */
export class NormActBlock {
  norm: ChannelNorm;

  constructor(
    readonly op: OpModule,
    channels: number,
  ) {
    this.norm = new ChannelNorm(channels);
  }

  forward(x: Tensor, mode: ForwardMode): Tensor {
    return relu(this.norm.forward(this.op.forward(x, mode), mode));
  }

  parameters(): Tensor[] {
    return this.op.parameters();
  }
}
