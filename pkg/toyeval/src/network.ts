// Builds a runnable network from a genome, mirroring the engine's instance
// report row for row: same op kinds, strides, channel widths and fusion
// topology, so shapes and weight counts can be checked against it directly.
//
// Resolution handling during forward: every block computes at its recorded
// output stride; source features are bilinearly resampled to that grid first,
// except the two stem convolutions which downsample by striding.

import { ConstraintViolation } from "./errors.js";
import {
  EDGE_ORDER,
  Genome,
  HEAD_OPTIONS,
  SpaceConfig,
  isActive,
  resolvedHeadChannels,
  rowChannels,
} from "./genome.js";
import {
  BottleneckAttention,
  ChannelNorm,
  Conv1x1,
  Conv3x3,
  ForwardMode,
  LightweightConv,
  NormActBlock,
} from "./modules.js";
import { Rng } from "./rng.js";
import { Tensor, bilinearResize, concatChannels } from "./tensor.js";

export type BlockKind = "stem" | "lightweight_conv" | "attention" | "fuse" | "slim_conv" | "upsample";

export interface PlanRow {
  kind: BlockKind;
  layer: number;
  row: number;
  stride: number;
  cIn: number;
  cOut: number;
}

interface Block {
  plan: PlanRow;
  /* indices into the block list; -1 is the network input */
  sources: number[];
  wrapped: NormActBlock | null; // null only for upsample blocks
  stemStride: boolean;          // stems stride inside the conv instead of resampling
}

export class ToyNetwork {
  readonly outStride: number;
  readonly headChannels: number;
  private lastShapes: number[][] = [];

  constructor(
    readonly blocks: Block[],
    readonly classifier: Conv1x1,
    readonly numClasses: number,
  ) {
    const head = blocks[blocks.length - 1].plan;
    this.outStride = head.stride;
    this.headChannels = head.cOut;
  }

  get plan(): PlanRow[] {
    return this.blocks.map((b) => b.plan);
  }

  /** Weight count of the mirrored backbone; the task classifier sits outside it. */
  paramCount(): number {
    let total = 0;
    for (const b of this.blocks) {
      if (b.wrapped === null) continue;
      for (const p of b.wrapped.parameters()) total += p.size;
    }
    return total;
  }

  parameters(): Tensor[] {
    const out: Tensor[] = [];
    for (const b of this.blocks) {
      if (b.wrapped !== null) out.push(...b.wrapped.parameters());
    }
    out.push(...this.classifier.parameters());
    return out;
  }

  norms(): ChannelNorm[] {
    const out: ChannelNorm[] = [];
    for (const b of this.blocks) {
      if (b.wrapped !== null) out.push(b.wrapped.norm);
    }
    return out;
  }

  /** Class logits at the head's output stride: [numClasses, H/outStride, W/outStride]. */
  forward(image: Tensor, mode: ForwardMode): Tensor {
    const [, h, w] = image.shape;
    const acts: Tensor[] = [];
    this.lastShapes = [];
    for (const block of this.blocks) {
      const oh = Math.floor(h / block.plan.stride);
      const ow = Math.floor(w / block.plan.stride);
      let out: Tensor;
      if (block.stemStride) {
        const src = block.sources[0] === -1 ? image : acts[block.sources[0]];
        out = block.wrapped!.forward(src, mode);
      } else {
        const parts = block.sources.map((i) => bilinearResize(i === -1 ? image : acts[i], oh, ow));
        const joined = concatChannels(parts);
        out = block.wrapped === null ? joined : block.wrapped.forward(joined, mode);
      }
      acts.push(out);
      this.lastShapes.push([...out.shape]);
    }
    const features = acts[acts.length - 1];
    return this.classifier.forward(features);
  }

  /** Per-block output shapes recorded by the most recent forward call. */
  shapes(): number[][] {
    return this.lastShapes;
  }
}

export interface BuildOptions {
  numClasses?: number;
  weightSeed?: number;
}

export function buildSubnetwork(genome: Genome, cfg: SpaceConfig, opts: BuildOptions = {}): ToyNetwork {
  const numClasses = opts.numClasses ?? 3;
  const rng = new Rng(opts.weightSeed ?? 1);
  const blocks: Block[] = [];
  const emit = (plan: PlanRow, sources: number[], wrapped: NormActBlock | null, stemStride = false): number => {
    blocks.push({ plan, sources, wrapped, stemStride });
    return blocks.length - 1;
  };
  const wrap = (op: Conv3x3 | Conv1x1 | LightweightConv | BottleneckAttention, channels: number) =>
    new NormActBlock(op, channels);

  const base = cfg.baseChannels;
  const stemA = emit(
    { kind: "stem", layer: -1, row: -1, stride: 2, cIn: 3, cOut: base / 2 },
    [-1],
    wrap(new Conv3x3(3, base / 2, 2, rng), base / 2),
    true,
  );
  const stemB = emit(
    { kind: "stem", layer: -1, row: -1, stride: 4, cIn: base / 2, cOut: base },
    [stemA],
    wrap(new Conv3x3(base / 2, base, 2, rng), base),
    true,
  );

  // out tracks each row's latest feature source while walking the layers
  const out = new Map<string, { idx: number; c: number }>();
  const L = cfg.numLayers;
  for (let layer = 0; layer < L; layer++) {
    for (let row = 0; row < 3; row++) {
      if (!isActive(genome, layer, row)) continue;
      const cell = genome.cells[layer * 3 + row];
      if (cell === null) throw new ConstraintViolation(`active slot layer ${layer} row ${row} holds no cell`);
      const stride = cfg.strideRows[row];
      const targetC = rowChannels(cfg, row, cell.widthIndex);

      let sources: Array<{ idx: number; c: number }>;
      if (layer === 0) {
        sources = [{ idx: stemB, c: base }];
      } else {
        const node = genome.nodes[(layer - 1) * 3 + row];
        if (node === null) throw new ConstraintViolation(`active slot layer ${layer} row ${row} holds no node`);
        sources = [];
        for (const edge of EDGE_ORDER) {
          if (!node.incoming.includes(edge)) continue;
          const srcRow = edge === "same" ? row : edge === "higher" ? row - 1 : row + 1;
          const src = out.get(`${layer - 1},${srcRow}`);
          if (src === undefined) {
            throw new ConstraintViolation(`layer ${layer} row ${row} edge ${edge} references an inactive source`);
          }
          sources.push(src);
        }
      }

      let src: { idx: number; c: number };
      if (sources.length > 1) {
        const concatC = sources.reduce((a, s) => a + s.c, 0);
        const idx = emit(
          { kind: "fuse", layer, row, stride, cIn: concatC, cOut: targetC },
          sources.map((s) => s.idx),
          wrap(new Conv3x3(concatC, targetC, 1, rng), targetC),
        );
        src = { idx, c: targetC };
      } else {
        src = sources[0];
      }

      let cellIdx: number;
      let cellOutC: number;
      if (cell.op === "conv") {
        cellIdx = emit(
          { kind: "lightweight_conv", layer, row, stride, cIn: src.c, cOut: targetC },
          [src.idx],
          wrap(new LightweightConv(src.c, targetC, rng), targetC),
        );
        cellOutC = targetC;
      } else {
        // attention keeps its source width; the width gene only acts through fusion
        cellIdx = emit(
          { kind: "attention", layer, row, stride, cIn: src.c, cOut: src.c },
          [src.idx],
          wrap(new BottleneckAttention(src.c, cfg.attentionBottleneck, rng), src.c),
        );
        cellOutC = src.c;
      }
      out.set(`${layer},${row}`, { idx: cellIdx, c: cellOutC });
    }
  }

  const headStrides = HEAD_OPTIONS[genome.headIndex];
  const outStride = Math.min(...headStrides);
  const headC = resolvedHeadChannels(cfg);
  const tips: number[] = [];
  for (const stride of headStrides) {
    const row = cfg.strideRows.indexOf(stride);
    const src = out.get(`${L - 1},${row}`);
    if (src === undefined) {
      throw new ConstraintViolation(`head requests stride ${stride} but row ${row} is inactive`);
    }
    let tip = emit(
      { kind: "slim_conv", layer: L, row, stride, cIn: src.c, cOut: headC },
      [src.idx],
      wrap(new Conv1x1(src.c, headC, rng), headC),
    );
    if (stride !== outStride) {
      tip = emit(
        { kind: "upsample", layer: L, row, stride: outStride, cIn: headC, cOut: headC },
        [tip],
        null,
      );
    }
    tips.push(tip);
  }
  emit(
    { kind: "fuse", layer: L, row: -1, stride: outStride, cIn: headC * tips.length, cOut: headC },
    tips,
    wrap(new Conv3x3(headC * tips.length, headC, 1, rng), headC),
  );

  return new ToyNetwork(blocks, new Conv1x1(headC, numClasses, rng), numClasses);
}
