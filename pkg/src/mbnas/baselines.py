"""Reference searches and the correlation statistics used to compare them."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from itertools import count
from typing import Optional, Sequence

from .errors import EmptyFront, LengthMismatch, ZeroVariance
from .evaluators import Evaluator, ObjectivePair
from .nsga2 import EvaluatedCandidate, dominates, non_dominated_sort
from .space import Genome, SearchSpaceConfig, genome_key, neighbors, sample


@dataclass
class BaselineResult:
    candidates: list
    front: list
    stats: dict


def _front_of(cands: Sequence[EvaluatedCandidate], pair: ObjectivePair) -> list:
    if not cands:
        raise EmptyFront("no candidates were evaluated")
    return non_dominated_sort(cands, pair)[0]


def random_baseline(
    config: SearchSpaceConfig,
    n: int,
    evaluator: Evaluator,
    seed: int,
    pair: Optional[ObjectivePair] = None,
    branch_count: Optional[int] = None,
) -> BaselineResult:
    """Evaluate n prior-biased samples and report their non-dominated subset."""
    if n < 1:
        raise ValueError("n must be >= 1")
    pair = pair or ObjectivePair()
    rng = random.Random(seed)
    genomes = [sample(config, rng, branch_count) for _ in range(n)]
    ids = list(range(n))
    vectors = evaluator.evaluate_batch(genomes, ids)
    cands = [
        EvaluatedCandidate(i, g, genome_key(g, config), v, generation=0)
        for g, i, v in zip(genomes, ids, vectors)
    ]
    front = _front_of(cands, pair)
    return BaselineResult(
        candidates=cands,
        front=front,
        stats={"evaluations": n, "front_size": len(front)},
    )


@dataclass
class LocalSearchParams:
    seeds: int = 5
    iterations: int = 32
    neighbors_per_iter: int = 5

    def __post_init__(self):
        if self.seeds < 1 or self.iterations < 0 or self.neighbors_per_iter < 1:
            raise ValueError("local search parameters must be positive")


def local_search(
    config: SearchSpaceConfig,
    params: LocalSearchParams,
    evaluator: Evaluator,
    seed: int,
    pair: Optional[ObjectivePair] = None,
    branch_count: Optional[int] = None,
) -> BaselineResult:
    """Hill-climb from several seeds; pool everything that was evaluated.

    Each iteration samples single-edit neighbours of the incumbent; the first
    neighbour (in generation order) that strictly dominates the incumbent
    replaces it, otherwise the iteration counts as a stall. The reported front
    is the non-dominated subset of the whole evaluated pool.
    """
    pair = pair or ObjectivePair()
    ids = count()
    pool: list[EvaluatedCandidate] = []
    moves = 0
    stalls = 0

    def evaluate(genomes: list[Genome]) -> list[EvaluatedCandidate]:
        batch_ids = [next(ids) for _ in genomes]
        vectors = evaluator.evaluate_batch(genomes, batch_ids)
        cands = [
            EvaluatedCandidate(i, g, genome_key(g, config), v, generation=0)
            for g, i, v in zip(genomes, batch_ids, vectors)
        ]
        pool.extend(cands)
        return cands

    for restart in range(params.seeds):
        rng = random.Random(seed * 100_003 + restart)
        incumbent = evaluate([sample(config, rng, branch_count)])[0]
        for _ in range(params.iterations):
            batch = neighbors(
                incumbent.genome, config, rng, params.neighbors_per_iter
            )
            cands = evaluate(batch)
            replacement = next(
                (c for c in cands if dominates(c.objectives, incumbent.objectives, pair)),
                None,
            )
            if replacement is None:
                stalls += 1
            else:
                incumbent = replacement
                moves += 1

    front = _front_of(pool, pair)
    return BaselineResult(
        candidates=pool,
        front=front,
        stats={
            "evaluations": len(pool),
            "front_size": len(front),
            "moves": moves,
            "stalls": stalls,
            "seeds": params.seeds,
        },
    )


def select_closest_by_flops(
    front: Sequence[EvaluatedCandidate], targets_g: Sequence[float]
) -> list:
    """Per target, the front member with the closest FLOPs.

    Ties break toward lower latency, then lexicographic encoding, so the
    selection is deterministic.
    """
    if not front:
        raise EmptyFront("cannot select from an empty front")
    out = []
    for target in targets_g:
        best = min(
            front,
            key=lambda c: (
                abs(c.objectives.flops_g - target),
                c.objectives.latency_ms,
                c.key,
            ),
        )
        out.append(best)
    return out


def _check_paired(a: Sequence[float], b: Sequence[float]) -> int:
    if len(a) != len(b):
        raise LengthMismatch(f"paired sequences differ in length: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise ZeroVariance("need at least two observations")
    if all(x == a[0] for x in a) or all(y == b[0] for y in b):
        raise ZeroVariance("an input column is constant")
    return n


def kendall_tau(a: Sequence[float], b: Sequence[float]) -> float:
    """(concordant - discordant) / C(n, 2).

    Tau-a: tied pairs count as neither concordant nor discordant while the
    denominator stays C(n, 2).
    """
    n = _check_paired(a, b)
    concordant = 0
    discordant = 0
    for i in range(n):
        for j in range(i + 1, n):
            da = (a[i] > a[j]) - (a[i] < a[j])
            db = (b[i] > b[j]) - (b[i] < b[j])
            s = da * db
            if s > 0:
                concordant += 1
            elif s < 0:
                discordant += 1
    return (concordant - discordant) / (n * (n - 1) / 2)


def pearson_r(a: Sequence[float], b: Sequence[float]) -> float:
    """Standard sample correlation coefficient."""
    n = _check_paired(a, b)
    mean_a = sum(a) / n
    mean_b = sum(b) / n
    sxy = sum((x - mean_a) * (y - mean_b) for x, y in zip(a, b))
    sxx = sum((x - mean_a) ** 2 for x in a)
    syy = sum((y - mean_b) ** 2 for y in b)
    if sxx == 0.0 or syy == 0.0:
        raise ZeroVariance("an input column is constant")
    return sxy / math.sqrt(sxx * syy)
