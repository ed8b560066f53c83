import { readFileSync } from "node:fs";

import { SpaceConfig, parseSpaceConfig } from "../src/genome.js";
import { Rng } from "../src/rng.js";
import { Tensor, backward, clearTape, noGrad, weightedSum, zeros } from "../src/tensor.js";

export interface ParityCase {
  id: string;
  genome: Record<string, unknown>;
  input: [number, number];
  flops: number;
  params: number;
  per_op: Array<{
    kind: string;
    layer: number;
    row: number;
    stride: number;
    c_in: number;
    c_out: number;
  }>;
}

export function loadJson<T>(relative: string): T {
  const url = new URL(relative, import.meta.url);
  return JSON.parse(readFileSync(url, "utf-8")) as T;
}

export function loadSpace(): SpaceConfig {
  return parseSpaceConfig(loadJson("../fixtures/space.json"));
}

export function loadParity(): { seed: number; cases: ParityCase[] } {
  return loadJson("../fixtures/parity.json");
}

export function randomTensor(shape: number[], rng: Rng, scaleBy = 1): Tensor {
  const t = zeros(shape);
  for (let i = 0; i < t.size; i++) t.data[i] = rng.gauss() * scaleBy;
  return t;
}

/** Largest per-tensor relative gap between backward() and central differences. */
export function gradientGap(forward: () => Tensor, tensors: Tensor[], probeSeed = 7): number {
  const probeLen = noGrad(forward).size;
  const probe = new Float64Array(probeLen);
  const rng = new Rng(probeSeed);
  for (let i = 0; i < probeLen; i++) probe[i] = rng.gauss();

  clearTape();
  for (const t of tensors) t.zeroGrad();
  backward(weightedSum(forward(), probe));
  const analytic = tensors.map((t) => Float64Array.from(t.grad));

  const h = 1e-5;
  const value = () => noGrad(() => weightedSum(forward(), probe)).data[0];
  let worst = 0;
  tensors.forEach((t, ti) => {
    let gapSq = 0;
    let magSq = 0;
    for (let i = 0; i < t.size; i++) {
      const keep = t.data[i];
      t.data[i] = keep + h;
      const up = value();
      t.data[i] = keep - h;
      const down = value();
      t.data[i] = keep;
      const fd = (up - down) / (2 * h);
      gapSq += (fd - analytic[ti][i]) ** 2;
      magSq += Math.max(Math.abs(fd), Math.abs(analytic[ti][i])) ** 2;
    }
    worst = Math.max(worst, Math.sqrt(gapSq) / Math.max(Math.sqrt(magSq), 1e-12));
  });
  return worst;
}
