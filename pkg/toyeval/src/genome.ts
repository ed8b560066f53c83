// Parsing and validation of the engine's JSON genome and space-config files.
// Only the documented file formats are consumed here; nothing is imported
// from the engine itself.

import { ConstraintViolation } from "./errors.js";

export const EDGE_ORDER = ["same", "higher", "lower"] as const;
export type Edge = (typeof EDGE_ORDER)[number];

export const HEAD_OPTIONS: ReadonlyArray<ReadonlyArray<number>> = [
  [8],
  [16],
  [32],
  [8, 16],
  [8, 32],
  [8, 16, 32],
];

export interface SpaceConfig {
  numLayers: number;
  strideRows: number[];
  widthMultipliers: number[];
  baseChannels: number;
  branchPriors: number[];
  attentionBottleneck: number;
  headChannels: number | null;
}

export interface CellGene {
  op: "conv" | "attn";
  widthIndex: number;
}

export interface NodeGene {
  incoming: Edge[];
}

export interface Genome {
  branchCount: number;
  /* start layer of rows 1 and 2; null when the row never activates */
  downsample2: number | null;
  downsample3: number | null;
  cells: Array<CellGene | null>;
  nodes: Array<NodeGene | null>;
  headIndex: number;
}

export function parseSpaceConfig(raw: unknown): SpaceConfig {
  const d = asObject(raw, "space config");
  const cfg: SpaceConfig = {
    numLayers: asInt(d.num_layers, "num_layers"),
    strideRows: asIntArray(d.stride_rows, "stride_rows"),
    widthMultipliers: asIntArray(d.width_multipliers, "width_multipliers"),
    baseChannels: asInt(d.base_channels, "base_channels"),
    branchPriors: asNumberArray(d.branch_priors, "branch_priors"),
    attentionBottleneck: asInt(d.attention_bottleneck, "attention_bottleneck"),
    headChannels: d.head_channels == null ? null : asInt(d.head_channels, "head_channels"),
  };
  if (cfg.numLayers < 3) throw new ConstraintViolation("num_layers must be >= 3");
  if (cfg.strideRows.join(",") !== "8,16,32") throw new ConstraintViolation("stride_rows must be [8, 16, 32]");
  if (cfg.widthMultipliers.length === 0) throw new ConstraintViolation("width_multipliers must be non-empty");
  if (cfg.baseChannels < 2 || cfg.baseChannels % 2 !== 0) {
    throw new ConstraintViolation("base_channels must be even and >= 2");
  }
  if (cfg.attentionBottleneck < 1) throw new ConstraintViolation("attention_bottleneck must be >= 1");
  return cfg;
}

export function resolvedHeadChannels(cfg: SpaceConfig): number {
  return cfg.headChannels == null ? cfg.baseChannels : cfg.headChannels;
}

export function rowChannels(cfg: SpaceConfig, row: number, widthIndex: number): number {
  return cfg.widthMultipliers[widthIndex] * (cfg.strideRows[row] / 8);
}

/** First layer at which a row carries features; Infinity when it never does. */
export function rowStartLayer(genome: Genome, row: number): number {
  if (row === 0) return 0;
  if (row === 1) return genome.branchCount >= 2 && genome.downsample2 != null ? genome.downsample2 : Infinity;
  return genome.branchCount >= 3 && genome.downsample3 != null ? genome.downsample3 : Infinity;
}

export function isActive(genome: Genome, layer: number, row: number): boolean {
  return layer >= rowStartLayer(genome, row);
}

export function parseGenome(raw: unknown, cfg: SpaceConfig): Genome {
  const d = asObject(raw, "genome");
  const branchCount = asInt(d.branch_count, "branch_count");
  if (branchCount < 1 || branchCount > 3) throw new ConstraintViolation("branch_count must be 1..3");

  const downs = Array.isArray(d.downsample_layers) ? d.downsample_layers : null;
  if (downs === null) throw new ConstraintViolation("downsample_layers must be a list");
  if (downs.length !== branchCount - 1) {
    throw new ConstraintViolation(
      `downsample_layers carries ${downs.length} entries for branch_count ${branchCount}`,
    );
  }
  const d2 = branchCount >= 2 ? asInt(downs[0], "downsample_layers[0]") : null;
  const d3 = branchCount >= 3 ? asInt(downs[1], "downsample_layers[1]") : null;
  const L = cfg.numLayers;
  if (d2 != null && (d2 < 1 || d2 > L - 1)) throw new ConstraintViolation("second-row start layer out of range");
  if (d3 != null && (d3 < 1 || d3 > L - 1)) throw new ConstraintViolation("third-row start layer out of range");
  if (d2 != null && d3 != null && d2 >= d3) {
    throw new ConstraintViolation("third row must start strictly after the second");
  }

  const rawCells = Array.isArray(d.cells) ? d.cells : null;
  if (rawCells === null || rawCells.length !== 3 * L) {
    throw new ConstraintViolation(`cells must hold ${3 * L} slots`);
  }
  const rawNodes = Array.isArray(d.nodes) ? d.nodes : null;
  if (rawNodes === null || rawNodes.length !== 3 * (L - 1)) {
    throw new ConstraintViolation(`nodes must hold ${3 * (L - 1)} slots`);
  }

  const headIndex = asInt(d.head_index, "head_index");
  if (headIndex < 0 || headIndex >= HEAD_OPTIONS.length) {
    throw new ConstraintViolation(`head_index must be 0..${HEAD_OPTIONS.length - 1}`);
  }

  const genome: Genome = {
    branchCount,
    downsample2: d2,
    downsample3: d3,
    cells: rawCells.map((c, i) => parseCell(c, i, cfg)),
    nodes: rawNodes.map((n, i) => parseNode(n, i)),
    headIndex,
  };
  validateTopology(genome, cfg);
  return genome;
}

function parseCell(raw: unknown, index: number, cfg: SpaceConfig): CellGene | null {
  if (raw == null) return null;
  const d = asObject(raw, `cells[${index}]`);
  const op = d.op;
  if (op !== "conv" && op !== "attn") throw new ConstraintViolation(`cells[${index}] has unknown op ${String(op)}`);
  const widthIndex = asInt(d.width_index, `cells[${index}].width_index`);
  if (widthIndex < 0 || widthIndex >= cfg.widthMultipliers.length) {
    throw new ConstraintViolation(`cells[${index}].width_index out of range`);
  }
  return { op, widthIndex };
}

function parseNode(raw: unknown, index: number): NodeGene | null {
  if (raw == null) return null;
  const d = asObject(raw, `nodes[${index}]`);
  const incoming = Array.isArray(d.incoming) ? d.incoming : null;
  if (incoming === null || incoming.length === 0) {
    throw new ConstraintViolation(`nodes[${index}] must list at least one incoming edge`);
  }
  const edges: Edge[] = [];
  for (const e of incoming) {
    if (e !== "same" && e !== "higher" && e !== "lower") {
      throw new ConstraintViolation(`nodes[${index}] has unknown edge ${String(e)}`);
    }
    if (!edges.includes(e)) edges.push(e);
  }
  return { incoming: edges };
}

/* Cells and nodes must exist exactly on the active slots, and every edge has
   to reference a slot that was active in the previous layer. */
function validateTopology(genome: Genome, cfg: SpaceConfig): void {
  const L = cfg.numLayers;
  for (let layer = 0; layer < L; layer++) {
    for (let row = 0; row < 3; row++) {
      const active = isActive(genome, layer, row);
      const cell = genome.cells[layer * 3 + row];
      if (active && cell === null) {
        throw new ConstraintViolation(`active slot layer ${layer} row ${row} holds no cell`);
      }
      if (!active && cell !== null) {
        throw new ConstraintViolation(`inactive slot layer ${layer} row ${row} holds a cell`);
      }
      if (layer === 0) continue;
      const node = genome.nodes[(layer - 1) * 3 + row];
      if (active && node === null) {
        throw new ConstraintViolation(`active slot layer ${layer} row ${row} holds no node`);
      }
      if (!active && node !== null) {
        throw new ConstraintViolation(`inactive slot layer ${layer} row ${row} holds a node`);
      }
      if (!active || node === null) continue;
      for (const edge of node.incoming) {
        const srcRow = edge === "same" ? row : edge === "higher" ? row - 1 : row + 1;
        if (srcRow < 0 || srcRow > 2 || !isActive(genome, layer - 1, srcRow)) {
          throw new ConstraintViolation(
            `layer ${layer} row ${row} edge ${edge} references an inactive source`,
          );
        }
      }
    }
  }
}

function asObject(raw: unknown, what: string): Record<string, unknown> {
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new ConstraintViolation(`${what} must be a JSON object`);
  }
  return raw as Record<string, unknown>;
}

function asInt(raw: unknown, what: string): number {
  if (typeof raw !== "number" || !Number.isInteger(raw)) {
    throw new ConstraintViolation(`${what} must be an integer`);
  }
  return raw;
}

function asIntArray(raw: unknown, what: string): number[] {
  if (!Array.isArray(raw)) throw new ConstraintViolation(`${what} must be a list`);
  return raw.map((v, i) => asInt(v, `${what}[${i}]`));
}

function asNumberArray(raw: unknown, what: string): number[] {
  if (!Array.isArray(raw)) throw new ConstraintViolation(`${what} must be a list`);
  return raw.map((v, i) => {
    if (typeof v !== "number") throw new ConstraintViolation(`${what}[${i}] must be a number`);
    return v;
  });
}
