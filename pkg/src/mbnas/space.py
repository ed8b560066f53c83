"""Searchable architecture space.

A genome describes one sub-network of a three-row, L-layer grid. Rows run at
fixed strides 8/16/32; a genome activates 1..3 rows, lower-resolution rows
starting at its downsample layers. Every grid slot is a categorical gene with
a reserved "inactive" category, so the decision-vector length depends only on
the space configuration and never on the sampled topology.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .errors import MalformedEncoding, NoLegalNeighbor, StructureMismatch

STRIDE_ROWS = (8, 16, 32)

# Head variants: every non-empty stride subset that includes at least one row,
# restricted to the six combinations the head fusion supports.
HEAD_OPTIONS: tuple[tuple[int, ...], ...] = (
    (8,),
    (16,),
    (32,),
    (8, 16),
    (8, 32),
    (8, 16, 32),
)


class Op(str, Enum):
    """Searchable cell operators."""

    CONV = "conv"  # lightweight convolution (strided 3x3 + parallel 1x1)
    ATTN = "attn"  # memory-efficient self-attention


class Edge(str, Enum):
    """Incoming fusion edges a node may select, named by source row."""

    SAME = "same"      # same row, previous layer
    HIGHER = "higher"  # higher-resolution row (one row up), downsampled
    LOWER = "lower"    # lower-resolution row (one row down), upsampled


EDGE_ORDER = (Edge.SAME, Edge.HIGHER, Edge.LOWER)

# Canonical order of the 7 non-empty edge subsets; index 0 of the node
# alphabet is reserved for "inactive".
NODE_SUBSETS: tuple[frozenset, ...] = tuple(
    frozenset(c) for k in (1, 2, 3) for c in combinations(EDGE_ORDER, k)
)

# Violation kinds. Constraint indices follow the engine's numbering:
# 1 = path count, 2 = downsample layers, 3 = entry-node fusion, 4 = memory,
# 0 = structural coherence of the gene grids.
PATH_COUNT_ZERO = "PathCountZero"
DOWNSAMPLE_MISSING = "DownsampleMissing"
DOWNSAMPLE_INACTIVE = "DownsampleInactive"
DOWNSAMPLE_COLLISION = "DownsampleCollision"
DOWNSAMPLE_SKIP = "DownsampleSkip"
CELL_ACTIVITY = "CellActivityMismatch"
NODE_ACTIVITY = "NodeActivityMismatch"
EMPTY_NODE = "EmptyNode"
ILLEGAL_EDGE = "IllegalEdge"
ILLEGAL_HEAD = "IllegalHead"
WIDTH_RANGE = "WidthIndexRange"
MEMORY_OVER_BUDGET = "MemoryOverBudget"


@dataclass(frozen=True)
class Violation:
    kind: str
    constraint: int
    location: str
    message: str


@dataclass(frozen=True)
class CellGene:
    op: Op
    width_index: int


@dataclass(frozen=True)
class NodeGene:
    incoming: frozenset

    def edge_names(self) -> list[str]:
        return [e.value for e in EDGE_ORDER if e in self.incoming]


@dataclass(frozen=True)
class SearchSpaceConfig:
    """Static description of the grid the search runs over."""

    num_layers: int = 12
    stride_rows: tuple[int, ...] = STRIDE_ROWS
    width_multipliers: tuple[int, ...] = (8, 12, 16)
    base_channels: int = 64
    branch_priors: tuple[float, float, float] = (0.2, 0.3, 0.5)
    attention_bottleneck: int = 48
    head_channels: Optional[int] = None

    def __post_init__(self):
        # three branches need 1 <= d2 < d3 <= L-1, so fewer layers would make
        # part of the branch alphabet structurally empty
        if self.num_layers < 3:
            raise ValueError("num_layers must be >= 3")
        if tuple(self.stride_rows) != STRIDE_ROWS:
            raise ValueError(f"stride_rows must be {STRIDE_ROWS}")
        if not self.width_multipliers or any(w <= 0 for w in self.width_multipliers):
            raise ValueError("width_multipliers must be positive")
        if list(self.width_multipliers) != sorted(self.width_multipliers):
            raise ValueError("width_multipliers must be ascending")
        if len(self.branch_priors) != 3 or abs(sum(self.branch_priors) - 1.0) > 1e-9:
            raise ValueError("branch_priors must be three values summing to 1")
        if not (self.branch_priors[0] < self.branch_priors[1] < self.branch_priors[2]):
            raise ValueError("branch_priors must be strictly ascending")
        if self.base_channels < 2 or self.base_channels % 2 != 0:
            raise ValueError("base_channels must be even and >= 2")
        if self.attention_bottleneck < 1:
            raise ValueError("attention_bottleneck must be >= 1")

    @property
    def num_rows(self) -> int:
        return len(self.stride_rows)

    @property
    def resolved_head_channels(self) -> int:
        return self.base_channels if self.head_channels is None else self.head_channels

    def to_dict(self) -> dict:
        return {
            "num_layers": self.num_layers,
            "stride_rows": list(self.stride_rows),
            "width_multipliers": list(self.width_multipliers),
            "base_channels": self.base_channels,
            "branch_priors": list(self.branch_priors),
            "attention_bottleneck": self.attention_bottleneck,
            "head_channels": self.head_channels,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SearchSpaceConfig":
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in data.items() if k in known}
        for key in ("stride_rows", "width_multipliers", "branch_priors"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass
class Genome:
    """One point of the space: topology plus per-slot operator/fusion genes.

    cells is indexed [layer][row] over the full L x 3 grid, nodes is indexed
    [layer-1][row] for layers 1..L-1. Inactive slots hold None.
    """

    branch_count: int
    downsample_layers: tuple[Optional[int], Optional[int]]
    cells: list
    nodes: list
    head_index: int

    def clone(self) -> "Genome":
        return Genome(
            branch_count=self.branch_count,
            downsample_layers=self.downsample_layers,
            cells=[row[:] for row in self.cells],
            nodes=[row[:] for row in self.nodes],
            head_index=self.head_index,
        )

    def to_dict(self) -> dict:
        cells = []
        for layer in self.cells:
            for cell in layer:
                if cell is None:
                    cells.append(None)
                else:
                    cells.append({"op": cell.op.value, "width_index": cell.width_index})
        nodes = []
        for layer in self.nodes:
            for node in layer:
                if node is None:
                    nodes.append(None)
                else:
                    nodes.append({"incoming": node.edge_names()})
        return {
            "branch_count": self.branch_count,
            "downsample_layers": [d for d in self.downsample_layers if d is not None],
            "cells": cells,
            "nodes": nodes,
            "head_index": self.head_index,
        }

    @classmethod
    def from_dict(cls, data: dict, config: SearchSpaceConfig) -> "Genome":
        L = config.num_layers
        try:
            branch_count = int(data["branch_count"])
            ds = list(data["downsample_layers"])
            raw_cells = list(data["cells"])
            raw_nodes = list(data["nodes"])
            head_index = int(data["head_index"])
        except (KeyError, TypeError, ValueError) as exc:
            raise StructureMismatch(f"genome dict missing or malformed field: {exc}")
        if len(raw_cells) != 3 * L:
            raise StructureMismatch(
                f"cells has {len(raw_cells)} entries, expected {3 * L}"
            )
        if len(raw_nodes) != 3 * (L - 1):
            raise StructureMismatch(
                f"nodes has {len(raw_nodes)} entries, expected {3 * (L - 1)}"
            )
        if len(ds) > 2:
            raise StructureMismatch("downsample_layers holds at most two entries")
        try:
            # explicit nulls are tolerated and mean "absent"
            d2 = int(ds[0]) if len(ds) >= 1 and ds[0] is not None else None
            d3 = int(ds[1]) if len(ds) >= 2 and ds[1] is not None else None
            cells = []
            for layer in range(L):
                row_cells = []
                for row in range(3):
                    raw = raw_cells[layer * 3 + row]
                    if raw is None:
                        row_cells.append(None)
                    else:
                        row_cells.append(
                            CellGene(op=Op(raw["op"]), width_index=int(raw["width_index"]))
                        )
                cells.append(row_cells)
            nodes = []
            for t in range(1, L):
                row_nodes = []
                for row in range(3):
                    raw = raw_nodes[(t - 1) * 3 + row]
                    if raw is None:
                        row_nodes.append(None)
                    else:
                        row_nodes.append(
                            NodeGene(frozenset(Edge(e) for e in raw["incoming"]))
                        )
                nodes.append(row_nodes)
        except (KeyError, TypeError, ValueError) as exc:
            raise StructureMismatch(f"genome dict entry is malformed: {exc}")
        return cls(
            branch_count=branch_count,
            downsample_layers=(d2, d3),
            cells=cells,
            nodes=nodes,
            head_index=head_index,
        )


# ---------------------------------------------------------------------------
# Topology helpers


def row_start_layer(genome: Genome, row: int) -> Optional[int]:
    """First layer at which the row carries cells, or None if never active."""
    if row == 0:
        return 0
    if row == 1:
        return genome.downsample_layers[0] if genome.branch_count >= 2 else None
    if row == 2:
        return genome.downsample_layers[1] if genome.branch_count >= 3 else None
    raise ValueError(f"row out of range: {row}")


def is_active(genome: Genome, layer: int, row: int) -> bool:
    start = row_start_layer(genome, row)
    return start is not None and layer >= start


def active_strides(genome: Genome, config: SearchSpaceConfig) -> tuple[int, ...]:
    """Strides carrying cells at the final layer (rows persist once started)."""
    return tuple(
        config.stride_rows[r] for r in range(3) if is_active(genome, config.num_layers - 1, r)
    )


def available_edges(genome: Genome, t: int, r: int) -> list[Edge]:
    """Edges the node at (layer t, row r) may draw from, in canonical order."""
    avail = []
    if is_active(genome, t - 1, r):
        avail.append(Edge.SAME)
    if r > 0 and is_active(genome, t - 1, r - 1):
        avail.append(Edge.HIGHER)
    if r < 2 and is_active(genome, t - 1, r + 1):
        avail.append(Edge.LOWER)
    return avail


def is_entry_node(genome: Genome, t: int, r: int) -> bool:
    return r > 0 and row_start_layer(genome, r) == t


def legal_node_sets(genome: Genome, t: int, r: int) -> list[frozenset]:
    """Legal incoming-edge subsets for an active node, in canonical order.

    Entry nodes of a freshly started row must include the higher-resolution
    edge; every node needs at least one incoming edge.
    """
    avail = set(available_edges(genome, t, r))
    entry = is_entry_node(genome, t, r)
    out = []
    for subset in NODE_SUBSETS:
        if not subset <= avail:
            continue
        if entry and Edge.HIGHER not in subset:
            continue
        out.append(subset)
    return out


def legal_heads(branch_count: int) -> list[int]:
    """Head indices whose strides are all active for the given branch count."""
    active = {8}
    if branch_count >= 2:
        active.add(16)
    if branch_count >= 3:
        active.add(32)
    return [i for i, strides in enumerate(HEAD_OPTIONS) if set(strides) <= active]


# ---------------------------------------------------------------------------
# Gene slots and the fixed-length categorical view

SLOT_BRANCH = "branch"
SLOT_D2 = "d2"
SLOT_D3 = "d3"
SLOT_CELL = "cell"
SLOT_NODE = "node"
SLOT_HEAD = "head"


def gene_slots(config: SearchSpaceConfig) -> list[tuple]:
    """Canonical gene order: topology, then row blocks (cells then nodes), head.

    The row blocks are the crossover segments: cutting between them keeps each
    row's genes together.
    """
    L = config.num_layers
    slots: list[tuple] = [(SLOT_BRANCH,), (SLOT_D2,), (SLOT_D3,)]
    for r in range(3):
        for l in range(L):
            slots.append((SLOT_CELL, l, r))
        for t in range(1, L):
            slots.append((SLOT_NODE, t, r))
    slots.append((SLOT_HEAD,))
    return slots


def slot_size(slot: tuple, config: SearchSpaceConfig) -> int:
    kind = slot[0]
    if kind == SLOT_BRANCH:
        return 3
    if kind in (SLOT_D2, SLOT_D3):
        return config.num_layers  # None plus 1..L-1
    if kind == SLOT_CELL:
        return 1 + 2 * len(config.width_multipliers)
    if kind == SLOT_NODE:
        return 1 + len(NODE_SUBSETS)
    if kind == SLOT_HEAD:
        return len(HEAD_OPTIONS)
    raise ValueError(f"unknown slot kind {kind}")


def n_var(config: SearchSpaceConfig) -> int:
    """Number of categorical decision variables (gene slots)."""
    return len(gene_slots(config))


def encoded_length(config: SearchSpaceConfig) -> int:
    """Length of the one-hot vector: sum of the per-slot alphabet sizes."""
    return sum(slot_size(s, config) for s in gene_slots(config))


def segment_boundaries(config: SearchSpaceConfig) -> list[int]:
    """Gene indices where one-point crossover may cut (between segments)."""
    L = config.num_layers
    block = 2 * L - 1
    return [3, 3 + block, 3 + 2 * block, 3 + 3 * block]


def _cell_to_cat(cell: Optional[CellGene], config: SearchSpaceConfig) -> int:
    if cell is None:
        return 0
    W = len(config.width_multipliers)
    if not 0 <= cell.width_index < W:
        raise StructureMismatch(f"width_index {cell.width_index} out of range")
    op_idx = 0 if cell.op is Op.CONV else 1
    return 1 + op_idx * W + cell.width_index


def _cat_to_cell(cat: int, config: SearchSpaceConfig) -> Optional[CellGene]:
    if cat == 0:
        return None
    W = len(config.width_multipliers)
    op_idx, width = divmod(cat - 1, W)
    return CellGene(op=Op.CONV if op_idx == 0 else Op.ATTN, width_index=width)


_SUBSET_INDEX = {s: i for i, s in enumerate(NODE_SUBSETS)}


def _node_to_cat(node: Optional[NodeGene]) -> int:
    if node is None:
        return 0
    try:
        return 1 + _SUBSET_INDEX[node.incoming]
    except KeyError:
        raise StructureMismatch(f"node edge set {node.incoming} not in alphabet")


def _cat_to_node(cat: int) -> Optional[NodeGene]:
    return None if cat == 0 else NodeGene(NODE_SUBSETS[cat - 1])


def check_structure(genome: Genome, config: SearchSpaceConfig) -> None:
    """Raise StructureMismatch unless the genome's grids match the config."""
    L = config.num_layers
    if len(genome.cells) != L or any(len(row) != 3 for row in genome.cells):
        raise StructureMismatch("cells grid must be num_layers x 3")
    if len(genome.nodes) != L - 1 or any(len(row) != 3 for row in genome.nodes):
        raise StructureMismatch("nodes grid must be (num_layers - 1) x 3")
    if not 1 <= genome.branch_count <= 3:
        # branch_count 0 is a constraint violation, not a structural one, but
        # values outside the alphabet cannot be encoded at all
        if genome.branch_count not in (0,):
            raise StructureMismatch(f"branch_count {genome.branch_count} not encodable")
    if len(genome.downsample_layers) != 2:
        raise StructureMismatch("downsample_layers must hold two entries (None allowed)")
    for d in genome.downsample_layers:
        if d is not None and not 1 <= d <= L - 1:
            raise StructureMismatch(f"downsample layer {d} not encodable for L={L}")
    if not 0 <= genome.head_index < len(HEAD_OPTIONS):
        raise StructureMismatch(f"head_index {genome.head_index} out of range")


def gene_values(genome: Genome, config: SearchSpaceConfig) -> list[int]:
    """Categorical value per gene slot, in canonical slot order."""
    check_structure(genome, config)
    if genome.branch_count == 0:
        raise StructureMismatch("branch_count 0 has no category; validate() reports it")
    L = config.num_layers
    values = [genome.branch_count - 1]
    for d in genome.downsample_layers:
        values.append(0 if d is None else d)
    for r in range(3):
        for l in range(L):
            values.append(_cell_to_cat(genome.cells[l][r], config))
        for t in range(1, L):
            values.append(_node_to_cat(genome.nodes[t - 1][r]))
    values.append(genome.head_index)
    return values


def genome_from_values(values: Sequence[int], config: SearchSpaceConfig) -> Genome:
    L = config.num_layers
    slots = gene_slots(config)
    if len(values) != len(slots):
        raise StructureMismatch(f"expected {len(slots)} gene values, got {len(values)}")
    it = iter(values)
    branch_count = next(it) + 1
    d2 = next(it) or None
    d3 = next(it) or None
    cells = [[None] * 3 for _ in range(L)]
    nodes = [[None] * 3 for _ in range(L - 1)]
    for r in range(3):
        for l in range(L):
            cells[l][r] = _cat_to_cell(next(it), config)
        for t in range(1, L):
            nodes[t - 1][r] = _cat_to_node(next(it))
    head_index = next(it)
    return Genome(
        branch_count=branch_count,
        downsample_layers=(d2, d3),
        cells=cells,
        nodes=nodes,
        head_index=head_index,
    )


def encode(genome: Genome, config: SearchSpaceConfig) -> np.ndarray:
    """One-hot encode the genome; inactive slots use the reserved category."""
    values = gene_values(genome, config)
    slots = gene_slots(config)
    bits = np.zeros(encoded_length(config), dtype=np.uint8)
    offset = 0
    for value, slot in zip(values, slots):
        size = slot_size(slot, config)
        if not 0 <= value < size:
            raise StructureMismatch(f"gene value {value} out of range for {slot}")
        bits[offset + value] = 1
        offset += size
    return bits


def decode(bits: Sequence[int], config: SearchSpaceConfig) -> Genome:
    """Inverse of encode; rejects vectors that are not grouped one-hot."""
    arr = np.asarray(bits)
    expected = encoded_length(config)
    if arr.ndim != 1 or arr.shape[0] != expected:
        raise MalformedEncoding(f"expected length {expected}, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise MalformedEncoding("encoding must be binary")
    values = []
    offset = 0
    for slot in gene_slots(config):
        size = slot_size(slot, config)
        group = arr[offset : offset + size]
        hot = np.flatnonzero(group)
        if hot.shape[0] != 1:
            raise MalformedEncoding(
                f"group {slot} has {hot.shape[0]} hot bits, expected exactly 1"
            )
        values.append(int(hot[0]))
        offset += size
    return genome_from_values(values, config)


def genome_key(genome: Genome, config: SearchSpaceConfig) -> bytes:
    """Canonical duplicate-detection key."""
    return encode(genome, config).tobytes()


# ---------------------------------------------------------------------------
# Validation


def validate(genome: Genome, config: SearchSpaceConfig) -> list[Violation]:
    """Check constraints and grid coherence. Empty list means fully legal."""
    check_structure(genome, config)
    L = config.num_layers
    out: list[Violation] = []

    if genome.branch_count < 1:
        out.append(
            Violation(
                kind=PATH_COUNT_ZERO,
                constraint=1,
                location="branch_count",
                message="at least one branch must stay active",
            )
        )
        return out  # no topology to check further

    # out-of-range layers are caught by check_structure (they have no
    # encoding at all); here we check presence and ordering only
    d2, d3 = genome.downsample_layers
    if genome.branch_count >= 2:
        if d2 is None:
            out.append(
                Violation(DOWNSAMPLE_MISSING, 2, "d2", "two branches need a stride-16 start layer")
            )
    elif d2 is not None:
        out.append(
            Violation(DOWNSAMPLE_INACTIVE, 2, "d2", "single-branch genomes take no start layer")
        )
    if genome.branch_count == 3:
        if d3 is None:
            out.append(
                Violation(DOWNSAMPLE_MISSING, 2, "d3", "three branches need a stride-32 start layer")
            )
        if d2 is not None and d3 is not None and d2 >= d3:
            out.append(
                Violation(
                    DOWNSAMPLE_COLLISION,
                    2,
                    "d2/d3",
                    f"downsample layers must be distinct and ordered, got d2={d2}, d3={d3}",
                )
            )
    elif d3 is not None:
        out.append(
            Violation(DOWNSAMPLE_INACTIVE, 2, "d3", "a third start layer needs a third branch")
        )
    if out:
        return out  # activity map undefined while topology genes are broken

    for l in range(L):
        for r in range(3):
            cell = genome.cells[l][r]
            active = is_active(genome, l, r)
            loc = f"cell({l},{r})"
            if active and cell is None:
                out.append(Violation(CELL_ACTIVITY, 0, loc, "active slot holds no operator"))
            elif not active and cell is not None:
                out.append(Violation(CELL_ACTIVITY, 0, loc, "inactive slot holds an operator"))
            elif cell is not None and not 0 <= cell.width_index < len(config.width_multipliers):
                out.append(Violation(WIDTH_RANGE, 0, loc, f"width_index {cell.width_index}"))

    for t in range(1, L):
        for r in range(3):
            node = genome.nodes[t - 1][r]
            active = is_active(genome, t, r)
            loc = f"node({t},{r})"
            if not active:
                if node is not None:
                    out.append(Violation(NODE_ACTIVITY, 0, loc, "inactive slot holds edges"))
                continue
            if node is None:
                out.append(Violation(NODE_ACTIVITY, 0, loc, "active slot holds no edges"))
                continue
            if not node.incoming:
                out.append(Violation(EMPTY_NODE, 0, loc, "active node needs >= 1 incoming edge"))
                continue
            avail = set(available_edges(genome, t, r))
            illegal = node.incoming - avail
            if illegal:
                names = sorted(e.value for e in illegal)
                out.append(Violation(ILLEGAL_EDGE, 0, loc, f"edges {names} have no active source"))
            if is_entry_node(genome, t, r) and Edge.HIGHER not in node.incoming:
                out.append(
                    Violation(
                        DOWNSAMPLE_SKIP,
                        3,
                        loc,
                        "entry node of a new row must fuse the higher-resolution feature",
                    )
                )

    if genome.head_index not in legal_heads(genome.branch_count):
        out.append(
            Violation(
                ILLEGAL_HEAD,
                0,
                "head",
                f"head {HEAD_OPTIONS[genome.head_index]} selects an inactive stride",
            )
        )
    return out


# ---------------------------------------------------------------------------
# Repair, sampling, neighbors


def _as_rng(seed_or_rng) -> random.Random:
    if isinstance(seed_or_rng, random.Random):
        return seed_or_rng
    return random.Random(seed_or_rng)


def _valid_downsample_pairs(L: int) -> list[tuple[int, int]]:
    return [(a, b) for a in range(1, L) for b in range(a + 1, L)]


def repair(genome: Genome, config: SearchSpaceConfig, seed_or_rng) -> Genome:
    """Resample offending gene groups until the genome is constraint-valid.

    Only broken groups are touched, each resampled uniformly over its legal
    values given the (already fixed) topology, so repairing a raw uniform
    draw leaves legal genes uniformly distributed.
    """
    rng = _as_rng(seed_or_rng)
    g = genome.clone()
    L = config.num_layers
    if not 1 <= g.branch_count <= 3:
        raise StructureMismatch(f"cannot repair branch_count {g.branch_count}")

    d2, d3 = g.downsample_layers
    if g.branch_count == 1:
        d2, d3 = None, None
    elif g.branch_count == 2:
        d3 = None
        if d2 is None or not 1 <= d2 <= L - 1:
            d2 = rng.randrange(1, L)
    else:
        ok = d2 is not None and d3 is not None and 1 <= d2 < d3 <= L - 1
        if not ok:
            pairs = _valid_downsample_pairs(L)
            if not pairs:
                raise ValueError("three branches need num_layers >= 3")
            d2, d3 = pairs[rng.randrange(len(pairs))]
    g.downsample_layers = (d2, d3)

    W = len(config.width_multipliers)
    cell_choices = [CellGene(op, w) for op in (Op.CONV, Op.ATTN) for w in range(W)]
    for l in range(L):
        for r in range(3):
            active = is_active(g, l, r)
            cell = g.cells[l][r]
            if not active:
                g.cells[l][r] = None
            elif cell is None or not 0 <= cell.width_index < W:
                g.cells[l][r] = cell_choices[rng.randrange(len(cell_choices))]

    for t in range(1, L):
        for r in range(3):
            active = is_active(g, t, r)
            node = g.nodes[t - 1][r]
            if not active:
                g.nodes[t - 1][r] = None
                continue
            legal = legal_node_sets(g, t, r)
            if node is not None and node.incoming in legal:
                continue
            g.nodes[t - 1][r] = NodeGene(legal[rng.randrange(len(legal))])

    heads = legal_heads(g.branch_count)
    if g.head_index not in heads:
        g.head_index = heads[rng.randrange(len(heads))]
    return g


def _raw_uniform(config: SearchSpaceConfig, rng: random.Random, branch_count: int) -> Genome:
    """Uniform draw over the raw gene alphabets with the branch gene fixed."""
    slots = gene_slots(config)
    values = []
    for slot in slots:
        if slot[0] == SLOT_BRANCH:
            values.append(branch_count - 1)
        else:
            values.append(rng.randrange(slot_size(slot, config)))
    return genome_from_values(values, config)


def sample_branch_count(config: SearchSpaceConfig, rng: random.Random) -> int:
    u = rng.random()
    acc = 0.0
    for i, p in enumerate(config.branch_priors):
        acc += p
        if u < acc:
            return i + 1
    return 3


def sample(
    config: SearchSpaceConfig,
    seed_or_rng,
    branch_count: Optional[int] = None,
) -> Genome:
    """Draw a constraint-valid genome.

    The branch count follows the configured priors unless pinned; every other
    gene is uniform over its legal values for the drawn topology.
    """
    rng = _as_rng(seed_or_rng)
    bc = branch_count if branch_count is not None else sample_branch_count(config, rng)
    if not 1 <= bc <= 3:
        raise ValueError(f"branch_count must be in 1..3, got {bc}")
    raw = _raw_uniform(config, rng, bc)
    return repair(raw, config, rng)


def neighbors(genome: Genome, config: SearchSpaceConfig, seed_or_rng, k: int) -> list[Genome]:
    """Sample up to k distinct single-gene edits that stay constraint-valid.

    Edits cover cell operator/width changes, single-edge toggles on nodes and
    head changes; topology genes are not edited, so every neighbor shares the
    genome's branch structure and differs in exactly one gene.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return []
    rng = _as_rng(seed_or_rng)
    L = config.num_layers
    W = len(config.width_multipliers)
    edits: list[tuple] = []

    cell_choices = [CellGene(op, w) for op in (Op.CONV, Op.ATTN) for w in range(W)]
    for l in range(L):
        for r in range(3):
            cell = genome.cells[l][r]
            if cell is None:
                continue
            for alt in cell_choices:
                if alt != cell:
                    edits.append((SLOT_CELL, l, r, alt))

    for t in range(1, L):
        for r in range(3):
            node = genome.nodes[t - 1][r]
            if node is None:
                continue
            legal = legal_node_sets(genome, t, r)
            for edge in available_edges(genome, t, r):
                toggled = node.incoming ^ {edge}
                if toggled != node.incoming and toggled in legal:
                    edits.append((SLOT_NODE, t, r, NodeGene(toggled)))

    for head in legal_heads(genome.branch_count):
        if head != genome.head_index:
            edits.append((SLOT_HEAD, head))

    if not edits:
        raise NoLegalNeighbor("every single-gene edit violates a constraint")
    chosen = rng.sample(edits, min(k, len(edits)))
    out = []
    for edit in chosen:
        g = genome.clone()
        if edit[0] == SLOT_CELL:
            _, l, r, alt = edit
            g.cells[l][r] = alt
        elif edit[0] == SLOT_NODE:
            _, t, r, alt = edit
            g.nodes[t - 1][r] = alt
        else:
            g.head_index = edit[1]
        out.append(g)
    return out
