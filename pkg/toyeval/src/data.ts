// Synthetic three-class segmentation data. Each sample draws a smooth random
// field, splits it into terciles to get organic blob-shaped class regions
// (balanced by construction), then observes a noisy per-pixel class signature.
// Pixels carry weak individual evidence, so aggregating spatial context is
// what separates better networks from worse ones.

import { Rng } from "./rng.js";
import { Tensor, zeros } from "./tensor.js";

export interface ToySample {
  image: Tensor; // [3, H, W]
  labels: Int32Array; // H*W, values 0..numClasses-1
}

export interface ToyTaskOptions {
  seed?: number;
  height?: number;
  width?: number;
  samples?: number;
  noise?: number;
  signal?: number;
}

const CLASS_SIGNATURES = [
  [1, 0, 0],
  [0, 1, 0],
  [0, 0, 1],
];

export class ToyTask {
  readonly height: number;
  readonly width: number;
  readonly numClasses = 3;
  readonly noise: number;
  readonly signal: number;
  readonly seed: number;
  readonly train: ToySample[] = [];
  readonly val: ToySample[] = [];

  constructor(opts: ToyTaskOptions = {}) {
    this.seed = opts.seed ?? 0;
    this.height = opts.height ?? 64;
    this.width = opts.width ?? 128;
    this.noise = opts.noise ?? 1.5;
    this.signal = opts.signal ?? 1.0;
    const total = opts.samples ?? 24;
    const valCount = Math.max(1, Math.floor(total / 3));
    const rng = new Rng((this.seed ^ 0x5eed) >>> 0);
    for (let i = 0; i < total; i++) {
      const sample = this.drawSample(rng);
      if (i < total - valCount) this.train.push(sample);
      else this.val.push(sample);
    }
  }

  /** Fresh sample from the same distribution (used for calibration). */
  drawSample(rng: Rng): ToySample {
    const h = this.height;
    const w = this.width;
    const n = h * w;
    const field = new Float64Array(n);
    // four random plane waves; their sum is a smooth blobby field
    for (let k = 0; k < 4; k++) {
      const fy = rng.uniform(0.5, 2.5);
      const fx = rng.uniform(0.5, 2.5);
      const phase = rng.uniform(0, 2 * Math.PI);
      const amp = rng.uniform(0.5, 1.0);
      for (let y = 0; y < h; y++) {
        const ay = (2 * Math.PI * fy * y) / h;
        for (let x = 0; x < w; x++) {
          field[y * w + x] += amp * Math.sin(ay + (2 * Math.PI * fx * x) / w + phase);
        }
      }
    }
    const sorted = Float64Array.from(field).sort();
    const t1 = sorted[Math.floor(n / 3)];
    const t2 = sorted[Math.floor((2 * n) / 3)];
    const labels = new Int32Array(n);
    for (let i = 0; i < n; i++) labels[i] = field[i] < t1 ? 0 : field[i] < t2 ? 1 : 2;

    const image = zeros([3, h, w]);
    for (let i = 0; i < n; i++) {
      const sig = CLASS_SIGNATURES[labels[i]];
      for (let c = 0; c < 3; c++) {
        image.data[c * n + i] = sig[c] * this.signal + rng.gauss() * this.noise;
      }
    }
    return { image, labels };
  }
}

/** Nearest-center label downsampling to a strided output grid. */
export function labelsAtStride(labels: Int32Array, h: number, w: number, stride: number): Int32Array {
  const oh = Math.floor(h / stride);
  const ow = Math.floor(w / stride);
  const out = new Int32Array(oh * ow);
  for (let oy = 0; oy < oh; oy++) {
    const sy = Math.min(h - 1, Math.floor((oy + 0.5) * stride));
    for (let ox = 0; ox < ow; ox++) {
      const sx = Math.min(w - 1, Math.floor((ox + 0.5) * stride));
      out[oy * ow + ox] = labels[sy * w + sx];
    }
  }
  return out;
}
