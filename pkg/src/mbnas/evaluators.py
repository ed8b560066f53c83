"""Candidate evaluation.

Every candidate gets a full objective vector: an accuracy-style score to
maximize plus analytic latency/FLOPs/params to minimize. The proxy scores
architectures deterministically from their cost profile; external evaluators
(see protocol.py) supply trained scores over a line-delimited JSON protocol
while the analytic side still comes from the cost model.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .arch import decode_to_ir
from .costs import HardwareProfile, MemoryCheck, ModelCost, aggregate, check_memory, estimate_latency
from .space import Genome, Op, SearchSpaceConfig, genome_key, is_active

MINIMIZE_AXES = ("latency_ms", "flops_g", "params_m")


@dataclass(frozen=True)
class ObjectiveVector:
    score: float          # higher is better, 0..100
    latency_ms: float
    flops_g: float
    params_m: float
    feasible: bool
    source: str           # "proxy" or "external"
    violation: float = 0.0  # magnitude used to order infeasible candidates

    def to_dict(self) -> dict:
        return {
            "score": self.score,
            "latency_ms": self.latency_ms,
            "flops_g": self.flops_g,
            "params_m": self.params_m,
            "feasible": self.feasible,
            "source": self.source,
            "violation": self.violation,
        }


@dataclass(frozen=True)
class ObjectivePair:
    """Active two-objective view: maximize score, minimize one cost axis."""

    minimize: str = "latency_ms"

    def __post_init__(self):
        if self.minimize not in MINIMIZE_AXES:
            raise ValueError(f"minimize must be one of {MINIMIZE_AXES}")

    def values(self, vector: ObjectiveVector) -> tuple[float, float]:
        return (vector.score, getattr(vector, self.minimize))


@dataclass(frozen=True)
class CostBundle:
    cost: ModelCost
    latency_ms: float
    memory: MemoryCheck

    @property
    def feasible(self) -> bool:
        return self.memory.passed

    @property
    def violation(self) -> float:
        if self.memory.passed or self.memory.budget_mb is None:
            return 0.0
        return self.memory.required_mb - self.memory.budget_mb


class CostOracle:
    """Caches analytic cost bundles per genome for one space/profile/input."""

    def __init__(
        self,
        config: SearchSpaceConfig,
        profile: HardwareProfile,
        input_size: tuple[int, int] = (256, 512),
    ):
        self.config = config
        self.profile = profile
        self.input_size = input_size
        self._cache: dict[bytes, CostBundle] = {}

    def bundle(self, genome: Genome) -> CostBundle:
        key = genome_key(genome, self.config)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        ir = decode_to_ir(genome, self.config, self.input_size)
        cost = aggregate(ir)
        bundle = CostBundle(
            cost=cost,
            latency_ms=estimate_latency(cost, self.profile),
            memory=check_memory(cost, self.profile),
        )
        self._cache[key] = bundle
        return bundle


@dataclass(frozen=True)
class ProxyConstants:
    """Calibration of the analytic score.

    score = 100 * sigmoid(bias + a*log1p(flops_g) + b*depth + c*attention)
    with depth the active-cell fraction and attention in [0, bonus_cap]. The
    defaults keep scores roughly in the 40..85 band over the default space.
    """

    a: float = 0.35
    b: float = 0.05
    c: float = 3.0
    bias: float = -0.4
    bonus_cap: float = 0.25
    epsilon: float = 0.0  # amplitude of seeded score noise


def _attention_target_row(genome: Genome) -> int:
    """Row whose attention cells the proxy rewards.

    Multi-branch genomes are rewarded for attention on the deepest (lowest
    resolution) active row, single-branch genomes on the full-resolution row.
    """
    return 0 if genome.branch_count == 1 else genome.branch_count - 1


def _placement_bonus(genome: Genome, config: SearchSpaceConfig, cap: float) -> float:
    row = _attention_target_row(genome)
    total = 0
    attn = 0
    for layer in range(config.num_layers):
        cell = genome.cells[layer][row]
        if cell is None:
            continue
        total += 1
        if cell.op is Op.ATTN:
            attn += 1
    return cap * attn / total if total else 0.0


def _depth_fraction(genome: Genome, config: SearchSpaceConfig) -> float:
    active = sum(
        1
        for layer in range(config.num_layers)
        for row in range(3)
        if is_active(genome, layer, row)
    )
    return active / (3 * config.num_layers)


def proxy_score(
    genome: Genome,
    config: SearchSpaceConfig,
    flops_g: float,
    constants: ProxyConstants,
    seed: int,
    candidate_id: int = 0,
) -> float:
    k = constants
    z = (
        k.bias
        + k.a * math.log1p(flops_g)
        + k.b * _depth_fraction(genome, config)
        + k.c * _placement_bonus(genome, config, k.bonus_cap)
    )
    score = 100.0 / (1.0 + math.exp(-z))
    if k.epsilon > 0.0:
        rng = random.Random(seed * 2_654_435_761 + candidate_id)
        score = min(100.0, max(0.0, score + rng.uniform(-k.epsilon, k.epsilon)))
    return score


class Evaluator:
    """Interface the search loop drives.

    Implementations expose an analytic CostOracle (used for latency caps and
    the cost-side objectives) and fill in the score.
    """

    source = "proxy"
    oracle: CostOracle

    def evaluate(self, genome: Genome, candidate_id: int = 0) -> ObjectiveVector:
        raise NotImplementedError

    def evaluate_batch(
        self, genomes: Sequence[Genome], ids: Sequence[int]
    ) -> list[ObjectiveVector]:
        return [self.evaluate(g, i) for g, i in zip(genomes, ids)]

    def close(self) -> None:
        pass


class ProxyEvaluator(Evaluator):
    source = "proxy"

    def __init__(
        self,
        config: SearchSpaceConfig,
        profile: HardwareProfile,
        constants: Optional[ProxyConstants] = None,
        input_size: tuple[int, int] = (256, 512),
        seed: int = 0,
        oracle: Optional[CostOracle] = None,
    ):
        self.config = config
        self.profile = profile
        self.constants = constants or ProxyConstants()
        self.seed = seed
        self.oracle = oracle or CostOracle(config, profile, input_size)
        self._cache: dict[bytes, ObjectiveVector] = {}

    def evaluate(self, genome: Genome, candidate_id: int = 0) -> ObjectiveVector:
        noisy = self.constants.epsilon > 0.0
        key = None
        if not noisy:
            key = genome_key(genome, self.config)
            hit = self._cache.get(key)
            if hit is not None:
                return hit
        bundle = self.oracle.bundle(genome)
        score = proxy_score(
            genome,
            self.config,
            bundle.cost.flops_g,
            self.constants,
            self.seed,
            candidate_id,
        )
        vector = ObjectiveVector(
            score=score,
            latency_ms=bundle.latency_ms,
            flops_g=bundle.cost.flops_g,
            params_m=bundle.cost.params_m,
            feasible=bundle.feasible,
            source=self.source,
            violation=bundle.violation,
        )
        if key is not None:
            self._cache[key] = vector
        return vector


def evaluate_proxy(
    genome: Genome,
    config: SearchSpaceConfig,
    profile: HardwareProfile,
    seed: int = 0,
    constants: Optional[ProxyConstants] = None,
    input_size: tuple[int, int] = (256, 512),
    candidate_id: int = 0,
) -> ObjectiveVector:
    """One-shot proxy evaluation (constraint-invalid genomes raise)."""
    evaluator = ProxyEvaluator(
        config, profile, constants=constants, input_size=input_size, seed=seed
    )
    return evaluator.evaluate(genome, candidate_id)
