"""Multi-branch architecture search with analytic cost models.

The package splits into a search space (genomes, encodings, sampling,
repair), an architecture decoder, closed-form cost models, pluggable
evaluators, a constrained two-objective NSGA-II loop, and baselines for
comparison. `mbnas.service` exposes the engine over HTTP; the `mbnas`
command drives that service from the shell.
"""

__version__ = "0.1.0"

from .errors import (
    ConstraintViolation,
    EmptyFront,
    EvaluationTimeout,
    EvaluatorCrash,
    EvaluatorFailure,
    InfeasibleSpace,
    LengthMismatch,
    MalformedEncoding,
    MbnasError,
    NoLegalNeighbor,
    OddSpatialDim,
    ProtocolError,
    StructureMismatch,
    ZeroVariance,
)
from .space import Genome, SearchSpaceConfig, neighbors, sample, validate
from .arch import ArchitectureIR, decode_to_ir
from .costs import (
    HardwareProfile,
    ModelCost,
    aggregate,
    check_memory,
    estimate_latency,
    table1_rows,
)
from .evaluators import (
    CostOracle,
    Evaluator,
    ObjectivePair,
    ObjectiveVector,
    ProxyConstants,
    ProxyEvaluator,
    evaluate_proxy,
)
from .protocol import ExternalEvaluatorPool, ExternalWorker, WorkerPool
from .nsga2 import (
    EvaluatedCandidate,
    FrontArchive,
    Nsga2Params,
    SearchResult,
    crowding_distance,
    dominates,
    non_dominated_sort,
    search,
)
from .baselines import (
    kendall_tau,
    local_search,
    pearson_r,
    random_baseline,
    select_closest_by_flops,
)

__all__ = [
    "__version__",
    "MbnasError",
    "StructureMismatch",
    "MalformedEncoding",
    "ConstraintViolation",
    "NoLegalNeighbor",
    "OddSpatialDim",
    "InfeasibleSpace",
    "EmptyFront",
    "LengthMismatch",
    "ZeroVariance",
    "EvaluatorFailure",
    "EvaluationTimeout",
    "ProtocolError",
    "EvaluatorCrash",
    "SearchSpaceConfig",
    "Genome",
    "sample",
    "validate",
    "neighbors",
    "ArchitectureIR",
    "decode_to_ir",
    "HardwareProfile",
    "ModelCost",
    "aggregate",
    "estimate_latency",
    "check_memory",
    "table1_rows",
    "ObjectiveVector",
    "ObjectivePair",
    "CostOracle",
    "ProxyConstants",
    "Evaluator",
    "ProxyEvaluator",
    "evaluate_proxy",
    "ExternalWorker",
    "WorkerPool",
    "ExternalEvaluatorPool",
    "EvaluatedCandidate",
    "dominates",
    "non_dominated_sort",
    "crowding_distance",
    "FrontArchive",
    "Nsga2Params",
    "SearchResult",
    "search",
    "random_baseline",
    "local_search",
    "select_closest_by_flops",
    "kendall_tau",
    "pearson_r",
]
