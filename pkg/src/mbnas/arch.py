"""Decode genomes into an explicit operator-instance graph.

The IR is a DAG of operator instances in topological order. Resolution
changes between rows ride on the edges (bilinear, free); only head-side
upsampling materialises as instances so the head structure stays visible
to the cost model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import ConstraintViolation
from .space import (
    EDGE_ORDER,
    HEAD_OPTIONS,
    Edge,
    Genome,
    Op,
    SearchSpaceConfig,
    is_active,
    validate,
)

KIND_STEM = "stem"
KIND_LIGHTWEIGHT = "lightweight_conv"
KIND_ATTENTION = "attention"
KIND_FUSE = "fuse"
KIND_SLIM = "slim_conv"
KIND_UPSAMPLE = "upsample"


@dataclass(frozen=True)
class OpInstance:
    id: int
    kind: str
    layer: int   # -1 for stem, num_layers for head instances
    row: int     # -1 when the instance belongs to no single row
    stride: int  # output stride relative to the network input
    c_in: int
    c_out: int
    detail: Optional[int] = None  # attention bottleneck width


@dataclass
class ArchitectureIR:
    instances: list
    edges: list  # (src_id, dst_id), topological (src < dst)
    head_strides: tuple[int, ...]
    head_channels: int
    output_stride: int
    input_size: tuple[int, int]

    def incoming(self, instance_id: int) -> list[int]:
        return [s for s, d in self.edges if d == instance_id]


def row_channels(config: SearchSpaceConfig, row: int, width_index: int) -> int:
    """Channel count of a cell: width multiplier scaled by stride/8."""
    return config.width_multipliers[width_index] * (config.stride_rows[row] // 8)


def decode_to_ir(
    genome: Genome,
    config: SearchSpaceConfig,
    input_size: tuple[int, int] = (256, 512),
) -> ArchitectureIR:
    """Build the instance graph for a constraint-valid genome.

    Cells keep their gene's operator and width; attention preserves its input
    channel count (its cost model has no output-width term), so a width gene
    reaches an attention cell only through the fusion that feeds it. Multi-edge
    nodes concatenate their sources and fuse with a 3x3 convolution sized to
    the target cell's width.
    """
    violations = validate(genome, config)
    if violations:
        raise ConstraintViolation(
            f"genome has {len(violations)} constraint violations", violations
        )
    H, W = input_size
    if H <= 0 or W <= 0 or H % 32 or W % 32:
        raise ValueError(f"input size must be positive multiples of 32, got {input_size}")

    L = config.num_layers
    base = config.base_channels
    instances: list[OpInstance] = []
    edges: list[tuple[int, int]] = []

    def add(kind, layer, row, stride, c_in, c_out, detail=None) -> int:
        iid = len(instances)
        instances.append(OpInstance(iid, kind, layer, row, stride, c_in, c_out, detail))
        return iid

    stem_a = add(KIND_STEM, -1, -1, 2, 3, base // 2)
    stem_b = add(KIND_STEM, -1, -1, 4, base // 2, base)
    edges.append((stem_a, stem_b))

    # (layer, row) -> (producing instance id, its channel count)
    out: dict[tuple[int, int], tuple[int, int]] = {}

    for l in range(L):
        for r in range(3):
            if not is_active(genome, l, r):
                continue
            cell = genome.cells[l][r]
            stride = config.stride_rows[r]
            target_c = row_channels(config, r, cell.width_index)
            if l == 0:
                src_id, src_c = stem_b, base
            else:
                node = genome.nodes[l - 1][r]
                sources = []
                for edge in EDGE_ORDER:
                    if edge not in node.incoming:
                        continue
                    src_row = {Edge.SAME: r, Edge.HIGHER: r - 1, Edge.LOWER: r + 1}[edge]
                    sources.append(out[(l - 1, src_row)])
                if len(sources) == 1:
                    src_id, src_c = sources[0]
                else:
                    concat_c = sum(c for _, c in sources)
                    fuse = add(KIND_FUSE, l, r, stride, concat_c, target_c)
                    for sid, _ in sources:
                        edges.append((sid, fuse))
                    src_id, src_c = fuse, target_c
            if cell.op is Op.CONV:
                cid = add(KIND_LIGHTWEIGHT, l, r, stride, src_c, target_c)
            else:
                cid = add(
                    KIND_ATTENTION, l, r, stride, src_c, src_c,
                    detail=config.attention_bottleneck,
                )
            edges.append((src_id, cid))
            out[(l, r)] = (cid, instances[cid].c_out)

    head_strides = HEAD_OPTIONS[genome.head_index]
    out_stride = min(head_strides)
    head_c = config.resolved_head_channels
    tips = []
    for stride in head_strides:
        r = config.stride_rows.index(stride)
        src_id, src_c = out[(L - 1, r)]
        slim = add(KIND_SLIM, L, r, stride, src_c, head_c)
        edges.append((src_id, slim))
        if stride != out_stride:
            up = add(KIND_UPSAMPLE, L, r, out_stride, head_c, head_c)
            edges.append((slim, up))
            tips.append(up)
        else:
            tips.append(slim)
    head_fuse = add(KIND_FUSE, L, -1, out_stride, head_c * len(tips), head_c)
    for tip in tips:
        edges.append((tip, head_fuse))

    return ArchitectureIR(
        instances=instances,
        edges=edges,
        head_strides=head_strides,
        head_channels=head_c,
        output_stride=out_stride,
        input_size=(H, W),
    )
