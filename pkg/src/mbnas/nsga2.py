"""Constrained elitist multi-objective search (NSGA-II).

Parents and offspring are pooled each generation, duplicate architectures
are merged, and the next parent set is filled front by front with crowding
breaking the last tie. Feasible candidates always beat infeasible ones;
infeasible candidates order among themselves by violation magnitude. An
optional latency cap filters candidates before they are evaluated and an
optional score floor filters offspring after evaluation.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from itertools import count
from typing import Optional, Sequence

from .errors import InfeasibleSpace
from .evaluators import Evaluator, ObjectivePair, ObjectiveVector
from .space import (
    Genome,
    SearchSpaceConfig,
    gene_slots,
    gene_values,
    genome_from_values,
    genome_key,
    n_var,
    repair,
    sample,
    segment_boundaries,
    slot_size,
    SLOT_BRANCH,
)


def dominates(a: ObjectiveVector, b: ObjectiveVector, pair: ObjectivePair) -> bool:
    """Strict Pareto dominance on the active (maximize, minimize) pair."""
    a_max, a_min = pair.values(a)
    b_max, b_min = pair.values(b)
    if a_max < b_max or a_min > b_min:
        return False
    return a_max > b_max or a_min < b_min


@dataclass
class EvaluatedCandidate:
    candidate_id: int
    genome: Genome
    key: bytes
    objectives: ObjectiveVector
    generation: int
    rank: int = -1
    crowding: float = 0.0


def _constrained_dominates(a: EvaluatedCandidate, b: EvaluatedCandidate, pair) -> bool:
    fa, fb = a.objectives.feasible, b.objectives.feasible
    if fa and not fb:
        return True
    if fb and not fa:
        return False
    if not fa and not fb:
        return a.objectives.violation < b.objectives.violation
    return dominates(a.objectives, b.objectives, pair)


def non_dominated_sort(
    candidates: Sequence[EvaluatedCandidate], pair: ObjectivePair
) -> list[list[EvaluatedCandidate]]:
    """Fast non-dominated sorting with the constrained dominance relation."""
    n = len(candidates)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    domination_count = [0] * n
    fronts: list[list[int]] = [[]]
    for i in range(n):
        for j in range(i + 1, n):
            if _constrained_dominates(candidates[i], candidates[j], pair):
                dominated_by[i].append(j)
                domination_count[j] += 1
            elif _constrained_dominates(candidates[j], candidates[i], pair):
                dominated_by[j].append(i)
                domination_count[i] += 1
        if domination_count[i] == 0:
            fronts[0].append(i)
    current = 0
    while fronts[current]:
        nxt = []
        for i in fronts[current]:
            for j in dominated_by[i]:
                domination_count[j] -= 1
                if domination_count[j] == 0:
                    nxt.append(j)
        fronts.append(sorted(nxt))
        current += 1
    fronts.pop()
    return [[candidates[i] for i in front] for front in fronts]


def crowding_distance(
    front: Sequence[EvaluatedCandidate], pair: ObjectivePair
) -> list[float]:
    """Sum over objectives of the neighbour gap divided by the front's range.

    Boundary members get infinity; a zero-range objective contributes nothing.
    """
    n = len(front)
    if n == 0:
        return []
    if n <= 2:
        return [math.inf] * n
    dist = [0.0] * n
    for axis in range(2):
        values = [pair.values(c.objectives)[axis] for c in front]
        order = sorted(range(n), key=lambda i: (values[i], i))
        dist[order[0]] = math.inf
        dist[order[-1]] = math.inf
        span = values[order[-1]] - values[order[0]]
        if span <= 0:
            continue
        for pos in range(1, n - 1):
            i = order[pos]
            dist[i] += (values[order[pos + 1]] - values[order[pos - 1]]) / span
    return dist


def tournament_select(
    population: Sequence[EvaluatedCandidate],
    seed_or_rng,
    n_winners: Optional[int] = None,
) -> list[EvaluatedCandidate]:
    """Binary tournaments on (rank, crowding); full ties fall to a coin flip."""
    rng = seed_or_rng if isinstance(seed_or_rng, random.Random) else random.Random(seed_or_rng)
    if len(population) < 2:
        raise ValueError("tournament selection needs at least two candidates")
    wanted = len(population) if n_winners is None else n_winners
    winners = []
    for _ in range(wanted):
        i, j = rng.sample(range(len(population)), 2)
        a, b = population[i], population[j]
        if a.rank != b.rank:
            winners.append(a if a.rank < b.rank else b)
        elif a.crowding != b.crowding:
            winners.append(a if a.crowding > b.crowding else b)
        else:
            winners.append(a if rng.random() < 0.5 else b)
    return winners


def crossover_at(
    parent_a: Genome,
    parent_b: Genome,
    boundary_index: int,
    config: SearchSpaceConfig,
    seed_or_rng,
) -> tuple[Genome, Genome]:
    """One-point crossover at a fixed segment boundary, children repaired."""
    rng = seed_or_rng if isinstance(seed_or_rng, random.Random) else random.Random(seed_or_rng)
    cut = segment_boundaries(config)[boundary_index]
    va = gene_values(parent_a, config)
    vb = gene_values(parent_b, config)
    child_a = genome_from_values(va[:cut] + vb[cut:], config)
    child_b = genome_from_values(vb[:cut] + va[cut:], config)
    return repair(child_a, config, rng), repair(child_b, config, rng)


def crossover(
    parent_a: Genome,
    parent_b: Genome,
    p_c: float,
    seed_or_rng,
    config: SearchSpaceConfig,
) -> tuple[Genome, Genome]:
    """With probability p_c, cut between gene segments and swap the tails."""
    rng = seed_or_rng if isinstance(seed_or_rng, random.Random) else random.Random(seed_or_rng)
    if rng.random() >= p_c:
        return parent_a.clone(), parent_b.clone()
    boundary = rng.randrange(len(segment_boundaries(config)))
    return crossover_at(parent_a, parent_b, boundary, config, rng)


def mutate(
    genome: Genome,
    rate: float,
    seed_or_rng,
    config: SearchSpaceConfig,
    lock_branch: Optional[int] = None,
    repair_result: bool = True,
) -> Genome:
    """Resample each gene over its full alphabet with probability rate.

    Raw mutation treats "inactive" as a category like any other; the repair
    pass then restores constraint validity. Expected changed genes before
    repair is rate * n_var(config). Setting lock_branch pins the topology to
    one branch count (used by per-branch searches).
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError("mutation rate must be in [0, 1]")
    rng = seed_or_rng if isinstance(seed_or_rng, random.Random) else random.Random(seed_or_rng)
    values = gene_values(genome, config)
    for idx, slot in enumerate(gene_slots(config)):
        if slot[0] == SLOT_BRANCH and lock_branch is not None:
            values[idx] = lock_branch - 1
            continue
        if rng.random() >= rate:
            continue
        size = slot_size(slot, config)
        if size < 2:
            continue
        alt = rng.randrange(size - 1)
        if alt >= values[idx]:
            alt += 1
        values[idx] = alt
    mutant = genome_from_values(values, config)
    return repair(mutant, config, rng) if repair_result else mutant


@dataclass
class Nsga2Params:
    population_size: int = 40
    generations: int = 20
    crossover_prob: float = 0.9
    mutation_rate: Optional[float] = None  # default 1 / n_var(config)
    latency_cap_ms: Optional[float] = None
    score_min: Optional[float] = None
    minimize: str = "latency_ms"
    seed: int = 0
    top_k: int = 5
    branch_count: Optional[int] = None
    retry_budget: int = 20        # consecutive cap rejections before a fresh sample
    init_attempt_factor: int = 200  # sampling attempts per required candidate

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ValueError("crossover_prob must be in [0, 1]")
        if self.mutation_rate is not None and not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must be in [0, 1]")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.branch_count is not None and self.branch_count not in (1, 2, 3):
            raise ValueError("branch_count filter must be 1, 2 or 3")
        if self.retry_budget < 1 or self.init_attempt_factor < 1:
            raise ValueError("retry budgets must be >= 1")

    def to_dict(self) -> dict:
        return {
            "population_size": self.population_size,
            "generations": self.generations,
            "crossover_prob": self.crossover_prob,
            "mutation_rate": self.mutation_rate,
            "latency_cap_ms": self.latency_cap_ms,
            "score_min": self.score_min,
            "minimize": self.minimize,
            "seed": self.seed,
            "top_k": self.top_k,
            "branch_count": self.branch_count,
            "retry_budget": self.retry_budget,
            "init_attempt_factor": self.init_attempt_factor,
        }


class FrontArchive:
    """Every evaluated candidate, deduplicated, plus the running front.

    The non-dominated subset contains feasible candidates only; infeasible
    vectors never act as dominators.
    """

    def __init__(self, pair: ObjectivePair):
        self.pair = pair
        self._by_key: dict[bytes, EvaluatedCandidate] = {}
        self.order: list[EvaluatedCandidate] = []
        self._front: list[EvaluatedCandidate] = []
        self.duplicates_merged = 0

    def __len__(self) -> int:
        return len(self.order)

    def add(self, candidate: EvaluatedCandidate) -> tuple[EvaluatedCandidate, bool]:
        existing = self._by_key.get(candidate.key)
        if existing is not None:
            self.duplicates_merged += 1
            return existing, False
        self._by_key[candidate.key] = candidate
        self.order.append(candidate)
        if candidate.objectives.feasible:
            beaten = any(
                dominates(f.objectives, candidate.objectives, self.pair) for f in self._front
            )
            if not beaten:
                self._front = [
                    f
                    for f in self._front
                    if not dominates(candidate.objectives, f.objectives, self.pair)
                ]
                self._front.append(candidate)
        return candidate, True

    def non_dominated(self) -> list[EvaluatedCandidate]:
        return sorted(self._front, key=lambda c: c.candidate_id)


@dataclass
class SearchResult:
    config: SearchSpaceConfig
    params: Nsga2Params
    pair: ObjectivePair
    archive: FrontArchive
    front: list
    top_k: list
    stats: dict
    history: list


def search(
    config: SearchSpaceConfig,
    params: Nsga2Params,
    evaluator: Evaluator,
) -> SearchResult:
    """Run the full loop and return the archive, front and selection stats."""
    pair = ObjectivePair(params.minimize)
    master = random.Random(params.seed)
    rng_init = random.Random(master.randrange(2**63))
    rng_select = random.Random(master.randrange(2**63))
    rng_vary = random.Random(master.randrange(2**63))
    rate = params.mutation_rate if params.mutation_rate is not None else 1.0 / n_var(config)
    pop_n = params.population_size
    cap = params.latency_cap_ms
    archive = FrontArchive(pair)
    ids = count()
    stats = {
        "evaluations": 0,
        "init_evaluations": 0,
        "offspring_evaluations": 0,
        "cap_rejections": 0,
        "cap_rejections_init": 0,
        "floor_rejections": 0,
        "fresh_fallbacks": 0,
        "forced_accepts": 0,
    }
    history: list[dict] = []

    def cap_ok(genome: Genome) -> bool:
        if cap is None:
            return True
        return evaluator.oracle.bundle(genome).latency_ms <= cap

    def draw_capped(rng: random.Random, needed: int, counter_key: str) -> list[Genome]:
        out: list[Genome] = []
        attempts = 0
        limit = params.init_attempt_factor * max(1, needed)
        while len(out) < needed:
            if attempts >= limit:
                raise InfeasibleSpace(
                    f"latency cap {cap} ms rejected {stats[counter_key]} of "
                    f"{attempts} sampled candidates; the cap excludes the whole space"
                )
            genome = sample(config, rng, params.branch_count)
            attempts += 1
            if cap_ok(genome):
                out.append(genome)
            else:
                stats[counter_key] += 1
        return out

    def evaluate(genomes: list[Genome], generation: int, counter_key: str) -> list[EvaluatedCandidate]:
        batch_ids = [next(ids) for _ in genomes]
        vectors = evaluator.evaluate_batch(genomes, batch_ids)
        stats["evaluations"] += len(genomes)
        stats[counter_key] += len(genomes)
        out = []
        for genome, cid, vector in zip(genomes, batch_ids, vectors):
            cand = EvaluatedCandidate(
                candidate_id=cid,
                genome=genome,
                key=genome_key(genome, config),
                objectives=vector,
                generation=generation,
            )
            archive.add(cand)
            out.append(cand)
        return out

    def dedupe(cands: list[EvaluatedCandidate]) -> list[EvaluatedCandidate]:
        seen: set[bytes] = set()
        out = []
        for cand in cands:
            if cand.key not in seen:
                seen.add(cand.key)
                out.append(cand)
        return out

    def rank_population(cands: list[EvaluatedCandidate]) -> list[list[EvaluatedCandidate]]:
        fronts = non_dominated_sort(cands, pair)
        for rank, front in enumerate(fronts):
            distances = crowding_distance(front, pair)
            for cand, dist in zip(front, distances):
                cand.rank = rank
                cand.crowding = dist
        return fronts

    def environmental_selection(fronts: list[list[EvaluatedCandidate]]) -> list[EvaluatedCandidate]:
        selected: list[EvaluatedCandidate] = []
        for front in fronts:
            if len(selected) + len(front) <= pop_n:
                selected.extend(front)
                if len(selected) == pop_n:
                    break
                continue
            room = pop_n - len(selected)
            order = sorted(
                range(len(front)),
                key=lambda i: (-front[i].crowding, front[i].candidate_id),
            )
            selected.extend(front[i] for i in order[:room])
            break
        return selected

    def offspring_genomes(parents: list[EvaluatedCandidate], needed: int) -> list[Genome]:
        out: list[Genome] = []
        stash: list[Genome] = []
        consecutive_rejects = 0
        while len(out) < needed:
            if stash:
                child = stash.pop()
            else:
                pa, pb = tournament_select(parents, rng_select, 2)
                child_a, child_b = crossover(
                    pa.genome, pb.genome, params.crossover_prob, rng_vary, config
                )
                child = child_a
                stash.append(child_b)
            child = mutate(child, rate, rng_vary, config, lock_branch=params.branch_count)
            if cap_ok(child):
                out.append(child)
                consecutive_rejects = 0
                continue
            stats["cap_rejections"] += 1
            consecutive_rejects += 1
            if consecutive_rejects >= params.retry_budget:
                out.extend(draw_capped(rng_vary, 1, "cap_rejections"))
                stats["fresh_fallbacks"] += 1
                consecutive_rejects = 0
        return out

    def make_offspring(parents: list[EvaluatedCandidate], generation: int) -> list[EvaluatedCandidate]:
        accepted: list[EvaluatedCandidate] = []
        rounds = 0
        while len(accepted) < pop_n:
            needed = pop_n - len(accepted)
            batch = evaluate(
                offspring_genomes(parents, needed), generation, "offspring_evaluations"
            )
            if params.score_min is None:
                accepted.extend(batch)
                continue
            passed = [c for c in batch if c.objectives.score > params.score_min]
            stats["floor_rejections"] += len(batch) - len(passed)
            accepted.extend(passed)
            rounds += 1
            if rounds >= params.retry_budget and len(accepted) < pop_n:
                fill = evaluate(
                    draw_capped(rng_vary, pop_n - len(accepted), "cap_rejections"),
                    generation,
                    "offspring_evaluations",
                )
                stats["forced_accepts"] += len(fill)
                accepted.extend(fill)
        return accepted

    parents = evaluate(draw_capped(rng_init, pop_n, "cap_rejections_init"), 0, "init_evaluations")
    offspring = evaluate(draw_capped(rng_init, pop_n, "cap_rejections_init"), 0, "init_evaluations")
    history.append(
        {
            "generation": 0,
            "candidate_ids": [c.candidate_id for c in parents + offspring],
            "front_size": len(archive.non_dominated()),
        }
    )

    for generation in range(1, params.generations + 1):
        pool = dedupe(parents + offspring)
        fronts = rank_population(pool)
        parents = environmental_selection(fronts)
        offspring = make_offspring(parents, generation)
        history.append(
            {
                "generation": generation,
                "candidate_ids": [c.candidate_id for c in offspring],
                "front_size": len(archive.non_dominated()),
            }
        )

    rank_population(dedupe(parents + offspring))

    front = archive.non_dominated()
    distances = crowding_distance(front, pair)
    order = sorted(
        range(len(front)), key=lambda i: (-distances[i], front[i].candidate_id)
    )
    top_k = [front[i] for i in order[: params.top_k]]

    stats["duplicates_merged"] = archive.duplicates_merged
    stats["archive_size"] = len(archive)
    stats["front_size"] = len(front)
    return SearchResult(
        config=config,
        params=params,
        pair=pair,
        archive=archive,
        front=front,
        top_k=top_k,
        stats=stats,
        history=history,
    )
