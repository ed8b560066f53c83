"""Shared test helpers: toy-space enumeration and brute-force oracles."""

from __future__ import annotations

from itertools import product

from mbnas.evaluators import ObjectivePair, ObjectiveVector
from mbnas.space import CellGene, Edge, Genome, NodeGene, Op, SearchSpaceConfig

TOY_LAYERS = 4


def toy_config() -> SearchSpaceConfig:
    return SearchSpaceConfig(num_layers=TOY_LAYERS)


def toy_cell_options(config: SearchSpaceConfig) -> list[CellGene]:
    W = len(config.width_multipliers)
    return [CellGene(op, w) for op in (Op.CONV, Op.ATTN) for w in range(W)]


def enumerate_toy(config: SearchSpaceConfig) -> list[Genome]:
    """Every valid single-branch genome: only the row-0 cells are free."""
    L = config.num_layers
    options = toy_cell_options(config)
    out = []
    for combo in product(range(len(options)), repeat=L):
        cells = [[options[i], None, None] for i in combo]
        nodes = [[NodeGene(frozenset({Edge.SAME})), None, None] for _ in range(L - 1)]
        out.append(
            Genome(
                branch_count=1,
                downsample_layers=(None, None),
                cells=cells,
                nodes=nodes,
                head_index=0,
            )
        )
    return out


def weakly_dominates(a: tuple[float, float], b: tuple[float, float]) -> bool:
    """(score, cost) pairs: no worse on both axes."""
    return a[0] >= b[0] and a[1] <= b[1]


def strictly_dominates(a: tuple[float, float], b: tuple[float, float]) -> bool:
    return weakly_dominates(a, b) and a != b


def brute_force_front(vectors: list[ObjectiveVector], pair: ObjectivePair) -> list[int]:
    """Indices of non-dominated feasible vectors, by pairwise comparison."""
    points = [pair.values(v) for v in vectors]
    out = []
    for i, (vec, p) in enumerate(zip(vectors, points)):
        if not vec.feasible:
            continue
        dominated = any(
            other.feasible and strictly_dominates(q, p)
            for j, (other, q) in enumerate(zip(vectors, points))
            if j != i
        )
        if not dominated:
            out.append(i)
    return out


def front_keys(candidates, config) -> set[bytes]:
    from mbnas.space import genome_key

    return {genome_key(c.genome, config) for c in candidates}


def constrained_dominates_oracle(a: tuple, b: tuple) -> bool:
    """Written from the definition, not the library code.

    Points are (score, cost, feasible, violation). Feasible beats infeasible;
    two infeasible compare on violation alone; two feasible compare by strict
    Pareto dominance on (maximize score, minimize cost).
    """
    score_a, cost_a, feas_a, viol_a = a
    score_b, cost_b, feas_b, viol_b = b
    if feas_a != feas_b:
        return feas_a
    if not feas_a:
        return viol_a < viol_b
    if score_a < score_b or cost_a > cost_b:
        return False
    return score_a > score_b or cost_a < cost_b


def peel_fronts(points: list[tuple]) -> list[set[int]]:
    """Index fronts by repeatedly removing the current non-dominated subset."""
    n = len(points)
    dominators: list[set[int]] = [set() for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i != j and constrained_dominates_oracle(points[j], points[i]):
                dominators[i].add(j)
    remaining = set(range(n))
    fronts: list[set[int]] = []
    while remaining:
        front = {
            i for i in remaining if not any(j in remaining for j in dominators[i])
        }
        fronts.append(front)
        remaining -= front
    return fronts
