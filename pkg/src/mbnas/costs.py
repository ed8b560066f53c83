"""Analytic cost models: MACs, parameters, activation memory, latency.

FLOPs are multiply-accumulate counts (no factor 2). Bilinear resampling is
free. Activation memory is counted in elements; peak memory walks the IR in
topological order and frees a tensor as soon as its last consumer ran.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .arch import (
    KIND_ATTENTION,
    KIND_FUSE,
    KIND_LIGHTWEIGHT,
    KIND_SLIM,
    KIND_STEM,
    KIND_UPSAMPLE,
    ArchitectureIR,
    OpInstance,
)
from .errors import OddSpatialDim


@dataclass(frozen=True)
class OpCost:
    flops: int   # multiply-accumulates
    params: int
    act_mem: int  # activation elements


def _check_dims(**dims: int) -> None:
    for name, value in dims.items():
        if not isinstance(value, int) or value <= 0:
            raise ValueError(f"{name} must be a positive integer, got {value!r}")


def conv_cost(c_in: int, c_out: int, k: int, H: int, W: int) -> OpCost:
    """Dense k x k convolution evaluated at H x W output positions."""
    _check_dims(c_in=c_in, c_out=c_out, k=k, H=H, W=W)
    return OpCost(
        flops=k * k * c_in * c_out * H * W,
        params=k * k * c_in * c_out,
        act_mem=c_out * H * W,
    )


def lightweight_conv_cost(c_in: int, c_out: int, H: int, W: int) -> OpCost:
    """Strided 3x3 at half resolution plus a parallel full-resolution 1x1."""
    _check_dims(c_in=c_in, c_out=c_out, H=H, W=W)
    if H % 2 or W % 2:
        raise OddSpatialDim(f"lightweight conv needs even spatial dims, got {H}x{W}")
    zoomed = conv_cost(c_in, c_out, 3, H // 2, W // 2)
    point = conv_cost(c_in, c_out, 1, H, W)
    return OpCost(
        flops=zoomed.flops + point.flops,
        params=zoomed.params + point.params,
        act_mem=zoomed.act_mem + point.act_mem,
    )


def attention_cost(c_in: int, d: int, H: int, W: int) -> OpCost:
    """Self-attention over N = H*W tokens through a d-wide bottleneck.

    Terms: reduce to d, Q/K/V projections, score matrix, weighted sum,
    output projection, expand back to c_in, and the bypass 1x1. The module
    preserves its input channel count. act_mem includes the N x N map.
    """
    _check_dims(c_in=c_in, d=d, H=H, W=W)
    N = H * W
    flops = (
        N * c_in * d        # reduce
        + 3 * N * d * d     # q, k, v
        + N * N * d         # scores
        + N * N * d         # weighted values
        + N * d * d         # output projection
        + N * d * c_in      # expand
        + N * c_in * c_in   # bypass 1x1
    )
    params = 2 * c_in * d + 4 * d * d + c_in * c_in
    act_mem = N * N + 3 * N * d + 2 * N * c_in
    return OpCost(flops=flops, params=params, act_mem=act_mem)


def transformer_reference_cost(c: int, H: int, W: int) -> OpCost:
    """Full-width transformer block (attention at width c plus 4x FFN).

    Reference row for operator comparisons; not part of the search space.
    """
    _check_dims(c=c, H=H, W=W)
    N = H * W
    flops = 12 * N * c * c + 2 * N * N * c
    params = 12 * c * c
    act_mem = N * N + 4 * N * c
    return OpCost(flops=flops, params=params, act_mem=act_mem)


@dataclass(frozen=True)
class HardwareProfile:
    """Latency coefficients (ms per GMAC per operator kind) plus memory limits."""

    name: str = "unit"
    coefficients: dict = field(default_factory=dict)
    default_coefficient: float = 1.0
    overhead_ms: float = 0.0
    memory_budget_mb: Optional[float] = None
    bytes_per_element: int = 4
    training_factor: float = 2.0

    def __post_init__(self):
        if self.default_coefficient < 0 or self.overhead_ms < 0:
            raise ValueError("latency coefficients must be non-negative")
        if any(v < 0 for v in self.coefficients.values()):
            raise ValueError("latency coefficients must be non-negative")
        if self.bytes_per_element <= 0 or self.training_factor <= 0:
            raise ValueError("memory factors must be positive")
        if self.memory_budget_mb is not None and self.memory_budget_mb <= 0:
            raise ValueError("memory budget must be positive or null (unlimited)")

    def coeff(self, kind: str) -> float:
        return float(self.coefficients.get(kind, self.default_coefficient))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "coefficients": dict(self.coefficients),
            "default_coefficient": self.default_coefficient,
            "overhead_ms": self.overhead_ms,
            "memory_budget_mb": self.memory_budget_mb,
            "bytes_per_element": self.bytes_per_element,
            "training_factor": self.training_factor,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HardwareProfile":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass(frozen=True)
class PerOpCost:
    instance_id: int
    kind: str
    cost: OpCost


@dataclass(frozen=True)
class ModelCost:
    flops: int
    params: int
    peak_act_mem: int
    per_op: tuple

    @property
    def flops_g(self) -> float:
        return self.flops / 1e9

    @property
    def params_m(self) -> float:
        return self.params / 1e6


def instance_cost(inst: OpInstance, ir: ArchitectureIR) -> OpCost:
    H, W = ir.input_size
    if H % inst.stride or W % inst.stride:
        raise ValueError(
            f"input {H}x{W} not divisible by stride {inst.stride} (instance {inst.id})"
        )
    h, w = H // inst.stride, W // inst.stride
    if inst.kind == KIND_STEM:
        return conv_cost(inst.c_in, inst.c_out, 3, h, w)
    if inst.kind == KIND_LIGHTWEIGHT:
        return lightweight_conv_cost(inst.c_in, inst.c_out, h, w)
    if inst.kind == KIND_ATTENTION:
        return attention_cost(inst.c_in, inst.detail, h, w)
    if inst.kind == KIND_FUSE:
        return conv_cost(inst.c_in, inst.c_out, 3, h, w)
    if inst.kind == KIND_SLIM:
        return conv_cost(inst.c_in, inst.c_out, 1, h, w)
    if inst.kind == KIND_UPSAMPLE:
        return OpCost(flops=0, params=0, act_mem=inst.c_out * h * w)
    raise ValueError(f"unknown instance kind {inst.kind}")


def aggregate(ir: ArchitectureIR) -> ModelCost:
    """Sum per-instance costs and sweep peak live activation memory."""
    per_op = []
    in_edges: dict[int, list[int]] = {}
    remaining: dict[int, int] = {}
    for src, dst in ir.edges:
        in_edges.setdefault(dst, []).append(src)
        remaining[src] = remaining.get(src, 0) + 1

    alive: dict[int, int] = {}
    peak = 0
    total_flops = 0
    total_params = 0
    for inst in ir.instances:
        cost = instance_cost(inst, ir)
        per_op.append(PerOpCost(inst.id, inst.kind, cost))
        total_flops += cost.flops
        total_params += cost.params
        alive[inst.id] = cost.act_mem
        peak = max(peak, sum(alive.values()))
        for src in in_edges.get(inst.id, []):
            remaining[src] -= 1
            if remaining[src] == 0:
                alive.pop(src, None)
    return ModelCost(
        flops=total_flops,
        params=total_params,
        peak_act_mem=peak,
        per_op=tuple(per_op),
    )


def estimate_latency(cost: ModelCost, profile: HardwareProfile) -> float:
    """Coefficient-weighted GMACs plus a fixed per-instance overhead."""
    total = 0.0
    for op in cost.per_op:
        total += (op.cost.flops / 1e9) * profile.coeff(op.kind)
    return total + len(cost.per_op) * profile.overhead_ms


@dataclass(frozen=True)
class MemoryCheck:
    passed: bool
    required_mb: float
    budget_mb: Optional[float]
    message: str


def check_memory(cost: ModelCost, profile: HardwareProfile) -> MemoryCheck:
    """Peak activations times element size times the training multiplier."""
    required_mb = cost.peak_act_mem * profile.bytes_per_element * profile.training_factor / 1e6
    if profile.memory_budget_mb is None:
        return MemoryCheck(True, required_mb, None, "no memory budget configured")
    passed = required_mb <= profile.memory_budget_mb
    relation = "within" if passed else "exceeds"
    return MemoryCheck(
        passed,
        required_mb,
        profile.memory_budget_mb,
        f"peak {required_mb:.3f} MB {relation} budget {profile.memory_budget_mb:.3f} MB "
        f"({cost.peak_act_mem} elements x {profile.bytes_per_element} B "
        f"x {profile.training_factor} training factor)",
    )


TABLE1_INPUT = (256, 32, 64)  # channels, H, W


def table1_rows(
    attention_bottleneck: int = 48,
    profile: Optional[HardwareProfile] = None,
) -> list[dict]:
    """Canonical operator comparison at the 1 x 256 x 32 x 64 input."""
    c, H, W = TABLE1_INPUT
    rows = [
        ("Convolution", "conv", conv_cost(c, c, 3, H, W), "linear"),
        ("Lightweight Convolution", KIND_LIGHTWEIGHT, lightweight_conv_cost(c, c, H, W), "linear"),
        ("Transformer (reference)", "transformer", transformer_reference_cost(c, H, W), "quadratic"),
        (
            "Memory-efficient Self-attention",
            KIND_ATTENTION,
            attention_cost(c, attention_bottleneck, H, W),
            "quadratic",
        ),
    ]
    out = []
    for label, kind, cost, scaling in rows:
        row = {
            "operation": label,
            "kind": kind,
            "flops": cost.flops,
            "params": cost.params,
            "flops_g": cost.flops / 1e9,
            "params_m": cost.params / 1e6,
            "scaling": scaling,
        }
        if profile is not None:
            row["latency_ms"] = (cost.flops / 1e9) * profile.coeff(kind)
        out.append(row)
    return out
