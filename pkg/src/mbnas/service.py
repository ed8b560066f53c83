"""HTTP facade over the search engine.

Every route is a stateless function of its request body, so identical
requests return identical bodies; the CLI relies on this for replay.
Engine errors map to 400, evaluator subprocess failures to 502.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Literal, Optional

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from . import __version__
from .arch import decode_to_ir
from .baselines import (
    LocalSearchParams,
    kendall_tau,
    local_search,
    pearson_r,
    random_baseline,
)
from .costs import HardwareProfile, table1_rows
from .errors import ConstraintViolation, EvaluatorFailure, MbnasError
from .evaluators import (
    CostOracle,
    ObjectivePair,
    ProxyConstants,
    ProxyEvaluator,
)
from .fileio import baseline_export, front_export
from .nsga2 import Nsga2Params, search
from .protocol import DEFAULT_TIMEOUT_S, ExternalEvaluatorPool
from .space import Genome, SearchSpaceConfig, sample, validate

app = FastAPI(title="mbnas", version=__version__)


def _error_body(exc: Exception) -> dict:
    body = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConstraintViolation):
        body["violations"] = [
            {
                "kind": v.kind,
                "constraint": v.constraint,
                "location": v.location,
                "message": v.message,
            }
            for v in exc.violations
        ]
    return body


@app.exception_handler(EvaluatorFailure)
async def _evaluator_failure(request: Request, exc: EvaluatorFailure):
    return JSONResponse(status_code=502, content={"detail": _error_body(exc)})


@app.exception_handler(MbnasError)
async def _engine_error(request: Request, exc: MbnasError):
    return JSONResponse(status_code=400, content={"detail": _error_body(exc)})


@app.exception_handler(ValueError)
async def _value_error(request: Request, exc: ValueError):
    return JSONResponse(status_code=400, content={"detail": _error_body(exc)})


class EvaluatorSpec(BaseModel):
    """Which evaluator fills in the score objective."""

    model_config = ConfigDict(extra="forbid")

    type: Literal["proxy", "external"] = "proxy"
    constants: dict = Field(default_factory=dict)  # ProxyConstants overrides
    command: Optional[str] = None
    workers: int = Field(default=1, ge=1)
    timeout_s: float = Field(default=DEFAULT_TIMEOUT_S, gt=0)
    calibrate: bool = False


class SearchParamsModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    population_size: int = 40
    generations: int = 20
    crossover_prob: float = 0.9
    mutation_rate: Optional[float] = None
    latency_cap_ms: Optional[float] = None
    score_min: Optional[float] = None
    minimize: Literal["latency_ms", "flops_g", "params_m"] = "latency_ms"
    seed: int = 0
    top_k: int = 5
    branch_count: Optional[int] = None
    retry_budget: int = 20
    init_attempt_factor: int = 200


class SearchRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    space: dict = Field(default_factory=dict)
    profile: Optional[dict] = None
    params: SearchParamsModel = Field(default_factory=SearchParamsModel)
    evaluator: EvaluatorSpec = Field(default_factory=EvaluatorSpec)
    input_size: tuple[int, int] = (256, 512)


class CostRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    space: dict = Field(default_factory=dict)
    profile: Optional[dict] = None
    genome: dict
    input_size: tuple[int, int] = (256, 512)


class SampleRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    space: dict = Field(default_factory=dict)
    n: int = Field(default=1, ge=1)
    seed: int = 0
    branch_count: Optional[int] = None
    with_cost: bool = False
    profile: Optional[dict] = None
    input_size: tuple[int, int] = (256, 512)


class ValidateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    space: dict = Field(default_factory=dict)
    genome: dict


class RandomBaselineRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    space: dict = Field(default_factory=dict)
    profile: Optional[dict] = None
    n: int = Field(default=800, ge=1)
    seed: int = 0
    minimize: Literal["latency_ms", "flops_g", "params_m"] = "latency_ms"
    branch_count: Optional[int] = None
    evaluator: EvaluatorSpec = Field(default_factory=EvaluatorSpec)
    input_size: tuple[int, int] = (256, 512)


class LocalBaselineRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    space: dict = Field(default_factory=dict)
    profile: Optional[dict] = None
    seeds: int = Field(default=5, ge=1)
    iterations: int = Field(default=32, ge=0)
    neighbors_per_iter: int = Field(default=5, ge=1)
    seed: int = 0
    minimize: Literal["latency_ms", "flops_g", "params_m"] = "latency_ms"
    branch_count: Optional[int] = None
    evaluator: EvaluatorSpec = Field(default_factory=EvaluatorSpec)
    input_size: tuple[int, int] = (256, 512)


class CorrelateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    x: list[float]
    y: list[float]


def _space_from(payload: dict) -> SearchSpaceConfig:
    return SearchSpaceConfig.from_dict(payload)


def _profile_from(payload: Optional[dict]) -> HardwareProfile:
    if payload is None:
        return HardwareProfile(name="unit", coefficients={})
    return HardwareProfile.from_dict(payload)


@contextmanager
def _evaluator_for(
    spec: EvaluatorSpec,
    config: SearchSpaceConfig,
    profile: HardwareProfile,
    input_size: tuple[int, int],
    seed: int,
):
    if spec.type == "external":
        if not spec.command:
            raise ValueError("external evaluator needs a command")
        pool = ExternalEvaluatorPool(
            config,
            profile,
            spec.command,
            workers=spec.workers,
            timeout_s=spec.timeout_s,
            input_size=input_size,
            calibrate=spec.calibrate,
        )
        try:
            yield pool
        finally:
            pool.close()
    else:
        constants = ProxyConstants(**spec.constants)
        yield ProxyEvaluator(
            config, profile, constants=constants, input_size=input_size, seed=seed
        )


@app.get("/health")
async def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.get("/api/table1")
async def table1(attention_bottleneck: int = Query(default=48, ge=1)) -> dict:
    return {"rows": table1_rows(attention_bottleneck=attention_bottleneck)}


@app.post("/api/search")
async def run_search(request: SearchRequest) -> dict:
    config = _space_from(request.space)
    profile = _profile_from(request.profile)
    params = Nsga2Params(**request.params.model_dump())
    with _evaluator_for(
        request.evaluator, config, profile, tuple(request.input_size), params.seed
    ) as evaluator:
        result = search(config, params, evaluator)
    return front_export(result)


@app.post("/api/cost")
async def cost(request: CostRequest) -> dict:
    config = _space_from(request.space)
    profile = _profile_from(request.profile)
    genome = Genome.from_dict(request.genome, config)
    oracle = CostOracle(config, profile, tuple(request.input_size))
    bundle = oracle.bundle(genome)
    ir = decode_to_ir(genome, config, tuple(request.input_size))
    instances = {inst.id: inst for inst in ir.instances}
    mc = bundle.cost
    return {
        "flops": mc.flops,
        "params": mc.params,
        "flops_g": mc.flops_g,
        "params_m": mc.params_m,
        "peak_act_mem": mc.peak_act_mem,
        "latency_ms": bundle.latency_ms,
        "memory": {
            "passed": bundle.memory.passed,
            "required_mb": bundle.memory.required_mb,
            "budget_mb": bundle.memory.budget_mb,
        },
        "per_op": [
            {
                "id": row.instance_id,
                "kind": row.kind,
                "layer": instances[row.instance_id].layer,
                "row": instances[row.instance_id].row,
                "stride": instances[row.instance_id].stride,
                "c_in": instances[row.instance_id].c_in,
                "c_out": instances[row.instance_id].c_out,
                "flops": row.cost.flops,
                "params": row.cost.params,
                "act_mem": row.cost.act_mem,
            }
            for row in mc.per_op
        ],
    }


@app.post("/api/space/sample")
async def space_sample(request: SampleRequest) -> dict:
    config = _space_from(request.space)
    oracle = None
    if request.with_cost:
        oracle = CostOracle(config, _profile_from(request.profile), tuple(request.input_size))
    genomes = []
    for i in range(request.n):
        genome = sample(config, request.seed + i, branch_count=request.branch_count)
        entry = {"id": f"g{i}", "genome": genome.to_dict()}
        if oracle is not None:
            bundle = oracle.bundle(genome)
            entry["cost"] = {
                "flops_g": bundle.cost.flops_g,
                "params_m": bundle.cost.params_m,
                "latency_ms": bundle.latency_ms,
                "peak_act_mem": bundle.cost.peak_act_mem,
            }
        genomes.append(entry)
    return {"seed": request.seed, "genomes": genomes}


@app.post("/api/space/validate")
async def space_validate(request: ValidateRequest) -> dict:
    config = _space_from(request.space)
    genome = Genome.from_dict(request.genome, config)
    violations = validate(genome, config)
    return {
        "valid": not violations,
        "violations": [
            {
                "kind": v.kind,
                "constraint": v.constraint,
                "location": v.location,
                "message": v.message,
            }
            for v in violations
        ],
    }


@app.post("/api/baseline/random")
async def baseline_random(request: RandomBaselineRequest) -> dict:
    config = _space_from(request.space)
    profile = _profile_from(request.profile)
    pair = ObjectivePair(request.minimize)
    with _evaluator_for(
        request.evaluator, config, profile, tuple(request.input_size), request.seed
    ) as evaluator:
        result = random_baseline(
            config,
            request.n,
            evaluator,
            request.seed,
            pair=pair,
            branch_count=request.branch_count,
        )
    return baseline_export("random", config, pair, result.candidates, result.front, result.stats)


@app.post("/api/baseline/local")
async def baseline_local(request: LocalBaselineRequest) -> dict:
    config = _space_from(request.space)
    profile = _profile_from(request.profile)
    pair = ObjectivePair(request.minimize)
    ls_params = LocalSearchParams(
        seeds=request.seeds,
        iterations=request.iterations,
        neighbors_per_iter=request.neighbors_per_iter,
    )
    with _evaluator_for(
        request.evaluator, config, profile, tuple(request.input_size), request.seed
    ) as evaluator:
        result = local_search(
            config,
            ls_params,
            evaluator,
            request.seed,
            pair=pair,
            branch_count=request.branch_count,
        )
    return baseline_export("local", config, pair, result.candidates, result.front, result.stats)


@app.post("/api/correlate")
async def correlate(request: CorrelateRequest) -> dict:
    return {
        "n": len(request.x),
        "kendall_tau": kendall_tau(request.x, request.y),
        "pearson_r": pearson_r(request.x, request.y),
    }
