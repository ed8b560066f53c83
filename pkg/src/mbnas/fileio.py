"""File formats and atomic output writing.

All outputs go through a temp-file-then-rename so a crash never leaves a
partial file. Infinite crowding distances serialize as null to keep every
export strict JSON.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .costs import HardwareProfile
from .errors import LengthMismatch
from .evaluators import ObjectivePair
from .nsga2 import (
    EvaluatedCandidate,
    SearchResult,
    crowding_distance,
    non_dominated_sort,
)
from .space import Genome, SearchSpaceConfig


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def atomic_write_json(path: str | Path, obj) -> None:
    atomic_write_text(path, dump_json(obj))


def load_json(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def load_space(path: str | Path) -> SearchSpaceConfig:
    return SearchSpaceConfig.from_dict(load_json(path))


def load_profile(path: str | Path) -> HardwareProfile:
    return HardwareProfile.from_dict(load_json(path))


def load_genome(path: str | Path, config: SearchSpaceConfig) -> Genome:
    return Genome.from_dict(load_json(path), config)


def parse_columns(text: str) -> list[tuple[str, float]]:
    """Parse two-column (id, value) lines; commas or whitespace separate."""
    rows: list[tuple[str, float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p for p in line.replace(",", " ").split() if p]
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'id value', got {raw!r}")
        try:
            value = float(parts[1])
        except ValueError:
            raise ValueError(f"line {lineno}: value {parts[1]!r} is not a number")
        rows.append((parts[0], value))
    return rows


def align_columns(
    a: Sequence[tuple[str, float]], b: Sequence[tuple[str, float]]
) -> tuple[list[float], list[float]]:
    """Align two (id, value) column sets by id; id sets must match exactly."""
    map_a = dict(a)
    map_b = dict(b)
    if len(map_a) != len(a) or len(map_b) != len(b):
        raise ValueError("duplicate ids in a correlation column")
    if set(map_a) != set(map_b):
        missing = sorted(set(map_a) ^ set(map_b))
        raise LengthMismatch(f"column ids do not align; unmatched: {missing[:5]}")
    keys = sorted(map_a)
    return [map_a[k] for k in keys], [map_b[k] for k in keys]


def _finite_or_none(value: float) -> Optional[float]:
    return None if value is None or math.isinf(value) else value


def candidate_entry(cand: EvaluatedCandidate) -> dict:
    return {
        "id": cand.candidate_id,
        "generation": cand.generation,
        "rank": cand.rank,
        "crowding": _finite_or_none(cand.crowding),
        "genome": cand.genome.to_dict(),
        "objectives": cand.objectives.to_dict(),
    }


def _rerank(cands: list[EvaluatedCandidate], pair: ObjectivePair) -> None:
    for rank, front in enumerate(non_dominated_sort(cands, pair)):
        for cand, dist in zip(front, crowding_distance(front, pair)):
            cand.rank = rank
            cand.crowding = dist


def front_export(result: SearchResult) -> dict:
    """Self-contained search export: every candidate, front ids, history."""
    cands = list(result.archive.order)
    _rerank(cands, result.pair)
    return {
        "schema": "front-export/1",
        "engine_version": __version__,
        "objectives": {"maximize": "score", "minimize": result.pair.minimize},
        "space": result.config.to_dict(),
        "params": result.params.to_dict(),
        "candidates": [candidate_entry(c) for c in cands],
        "front": [c.candidate_id for c in result.front],
        "top_k": [c.candidate_id for c in result.top_k],
        "history": result.history,
        "stats": result.stats,
    }


def baseline_export(
    kind: str,
    config: SearchSpaceConfig,
    pair: ObjectivePair,
    candidates: list[EvaluatedCandidate],
    front: list[EvaluatedCandidate],
    stats: dict,
) -> dict:
    cands = list(candidates)
    _rerank(cands, pair)
    return {
        "schema": "baseline-export/1",
        "engine_version": __version__,
        "baseline": kind,
        "objectives": {"maximize": "score", "minimize": pair.minimize},
        "space": config.to_dict(),
        "candidates": [candidate_entry(c) for c in cands],
        "front": [c.candidate_id for c in front],
        "stats": stats,
    }
