import { describe, expect, it } from "vitest";

import { Rng } from "../src/rng.js";
import {
  Tensor,
  add,
  backward,
  bilinearResize,
  channelNormTrain,
  concatChannels,
  conv2d,
  crossEntropyMean,
  fromArray,
  matmul,
  noGrad,
  relu,
  scale,
  softmaxRows,
  toTokens,
  transpose,
  weightedSum,
} from "../src/tensor.js";
import { gradientGap, randomTensor } from "./helpers.js";

const TOL = 1e-4;

describe("primitive gradients against central differences", () => {
  it("conv2d 3x3 stride 1", () => {
    const rng = new Rng(11);
    const x = randomTensor([3, 6, 7], rng);
    const w = randomTensor([4, 3, 3, 3], rng);
    expect(gradientGap(() => conv2d(x, w, 1, 1), [x, w])).toBeLessThan(TOL);
  });

  it("conv2d 3x3 stride 2", () => {
    const rng = new Rng(12);
    const x = randomTensor([2, 8, 8], rng);
    const w = randomTensor([3, 2, 3, 3], rng);
    expect(gradientGap(() => conv2d(x, w, 2, 1), [x, w])).toBeLessThan(TOL);
  });

  it("conv2d 1x1", () => {
    const rng = new Rng(13);
    const x = randomTensor([5, 4, 4], rng);
    const w = randomTensor([2, 5, 1, 1], rng);
    expect(gradientGap(() => conv2d(x, w, 1, 0), [x, w])).toBeLessThan(TOL);
  });

  it("matmul and transpose", () => {
    const rng = new Rng(14);
    const a = randomTensor([4, 6], rng);
    const b = randomTensor([5, 6], rng);
    expect(gradientGap(() => matmul(a, transpose(b)), [a, b])).toBeLessThan(TOL);
  });

  it("softmax rows", () => {
    const rng = new Rng(15);
    const a = randomTensor([5, 7], rng);
    expect(gradientGap(() => softmaxRows(a), [a])).toBeLessThan(TOL);
  });

  it("channel normalization (batch statistics)", () => {
    const rng = new Rng(16);
    const x = randomTensor([3, 5, 5], rng);
    expect(gradientGap(() => channelNormTrain(x, 1e-5).out, [x])).toBeLessThan(TOL);
  });

  it("bilinear resize up and down", () => {
    const rng = new Rng(17);
    const x = randomTensor([2, 4, 6], rng);
    expect(gradientGap(() => bilinearResize(x, 8, 12), [x])).toBeLessThan(TOL);
    expect(gradientGap(() => bilinearResize(x, 2, 3), [x])).toBeLessThan(TOL);
  });

  it("relu, add, scale, concat, tokens", () => {
    const rng = new Rng(18);
    const a = randomTensor([2, 3, 4], rng);
    const b = randomTensor([2, 3, 4], rng);
    const c = randomTensor([3, 3, 4], rng);
    const f = () => toTokens(concatChannels([relu(add(a, scale(b, 0.7))), c]));
    expect(gradientGap(f, [a, b, c])).toBeLessThan(TOL);
  });

  it("cross entropy", () => {
    const rng = new Rng(19);
    const logits = randomTensor([6, 3], rng);
    const labels = Int32Array.from([0, 1, 2, 1, 0, 2]);
    expect(gradientGap(() => crossEntropyMean(logits, labels), [logits])).toBeLessThan(TOL);
  });
});

describe("autodiff mechanics", () => {
  it("accumulates through fan-out", () => {
    const x = fromArray([2.0], [1]);
    const y = add(x, x); // dy/dx = 2
    backward(weightedSum(y, Float64Array.from([1])));
    expect(x.grad[0]).toBeCloseTo(2, 12);
  });

  it("noGrad leaves no tape behind", () => {
    const x = fromArray([1.5], [1]);
    noGrad(() => scale(x, 3));
    const y = scale(x, 2);
    backward(y);
    expect(x.grad[0]).toBeCloseTo(2, 12);
  });

  it("relu does not swallow non-finite inputs", () => {
    const x = fromArray([1, -1, NaN, Infinity, -Infinity], [5]);
    const y = noGrad(() => relu(x));
    expect(y.data[0]).toBe(1);
    expect(y.data[1]).toBe(0);
    expect(Number.isNaN(y.data[2])).toBe(true);
    expect(y.data[3]).toBe(Infinity);
    expect(Number.isNaN(y.data[4])).toBe(true);
  });

  it("softmax rows are normalized", () => {
    const rng = new Rng(20);
    const a = randomTensor([3, 5], rng, 4);
    const s = noGrad(() => softmaxRows(a));
    for (let i = 0; i < 3; i++) {
      let sum = 0;
      for (let j = 0; j < 5; j++) sum += s.data[i * 5 + j];
      expect(sum).toBeCloseTo(1, 12);
    }
  });

  it("channel normalization centers and scales", () => {
    const rng = new Rng(21);
    const x = randomTensor([2, 6, 6], rng, 3);
    const { out }: { out: Tensor } = noGrad(() => channelNormTrain(x, 1e-9));
    for (let c = 0; c < 2; c++) {
      let mean = 0;
      let varr = 0;
      for (let i = 0; i < 36; i++) mean += out.data[c * 36 + i];
      mean /= 36;
      for (let i = 0; i < 36; i++) varr += (out.data[c * 36 + i] - mean) ** 2;
      varr /= 36;
      expect(Math.abs(mean)).toBeLessThan(1e-10);
      expect(varr).toBeCloseTo(1, 6);
    }
  });
});
