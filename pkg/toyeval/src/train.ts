// Training and scoring recipe, fixed so repeated runs reproduce bit-identical
// scores: Adam over mean cross-entropy at the head's output stride, cycling
// the training samples in order, then mean-IoU on the validation split.

import { NumericalDivergence } from "./errors.js";
import { ToySample, ToyTask, labelsAtStride } from "./data.js";
import { ToyNetwork } from "./network.js";
import { Rng } from "./rng.js";
import { Adam, argmaxRows, backward, clearTape, crossEntropyMean, noGrad, toTokens } from "./tensor.js";

export interface TrainOptions {
  lr?: number;
}

export const DEFAULT_BUDGET = 500;

/** Run the optimization loop for `budget` iterations. */
export function train(net: ToyNetwork, task: ToyTask, budget: number, opts: TrainOptions = {}): void {
  if (budget <= 0) return;
  const optimizer = new Adam(net.parameters(), opts.lr ?? 0.004);
  const targets = task.train.map((s) => labelsAtStride(s.labels, task.height, task.width, net.outStride));
  for (let step = 0; step < budget; step++) {
    const pick = step % task.train.length;
    const logits = net.forward(task.train[pick].image, { train: true });
    const loss = crossEntropyMean(toTokens(logits), targets[pick]);
    if (!Number.isFinite(loss.data[0])) {
      clearTape();
      throw new NumericalDivergence(`training loss became ${loss.data[0]} at iteration ${step}`);
    }
    backward(loss);
    optimizer.step();
    optimizer.zeroGrad();
  }
}

/** Train for `budget` iterations and return a 0..100 validation score. */
export function trainAndScore(net: ToyNetwork, task: ToyTask, budget = DEFAULT_BUDGET, opts: TrainOptions = {}): number {
  train(net, task, budget, opts);
  return scoreOnSplit(net, task, task.val);
}

/** Mean IoU (percent) of argmax predictions over a list of samples. */
export function scoreOnSplit(net: ToyNetwork, task: ToyTask, split: ToySample[]): number {
  const k = task.numClasses;
  const intersection = new Float64Array(k);
  const union = new Float64Array(k);
  noGrad(() => {
    for (const sample of split) {
      const logits = net.forward(sample.image, { train: false });
      const pred = argmaxRows(toTokens(logits));
      const truth = labelsAtStride(sample.labels, task.height, task.width, net.outStride);
      for (let i = 0; i < pred.length; i++) {
        if (pred[i] === truth[i]) {
          intersection[truth[i]] += 1;
          union[truth[i]] += 1;
        } else {
          union[truth[i]] += 1;
          union[pred[i]] += 1;
        }
      }
    }
  });
  let total = 0;
  let counted = 0;
  for (let c = 0; c < k; c++) {
    if (union[c] > 0) {
      total += intersection[c] / union[c];
      counted += 1;
    }
  }
  const miou = counted > 0 ? total / counted : 0;
  return Math.min(100, Math.max(0, 100 * miou));
}

/** Recompute every normalization layer's running statistics from fresh draws. */
export function calibrate(net: ToyNetwork, task: ToyTask, samples = 64, seed = 97): void {
  const rng = new Rng((task.seed ^ (seed * 2654435761)) >>> 0);
  for (const norm of net.norms()) norm.reset();
  noGrad(() => {
    for (let i = 0; i < samples; i++) {
      net.forward(task.drawSample(rng).image, { train: true });
    }
  });
}
