"""Wire protocol: handshake, round trips, failure taxonomy, pooled search."""

import pytest

from mbnas.errors import EvaluationTimeout, EvaluatorCrash, ProtocolError
from mbnas.evaluators import CostOracle, ObjectivePair
from mbnas.nsga2 import Nsga2Params, search
from mbnas.protocol import (
    ExternalEvaluatorPool,
    ExternalWorker,
    WorkerPool,
    eval_record,
    hello_record,
)
from mbnas.space import sample

from conftest import mock_command
from util import brute_force_front


def test_hello_record_shape():
    assert hello_record() == {"type": "hello", "version": 1}


def test_eval_record_shape(toy_config):
    g = sample(toy_config, 1, branch_count=1)
    record = eval_record(7, g.to_dict(), (1, 3, 128, 256), calibrate=True)
    assert record["type"] == "eval"
    assert record["id"] == 7
    assert record["input"] == [1, 3, 128, 256]
    assert record["calibrate"] is True
    assert record["genome"]["branch_count"] == 1


def run_worker(mode, request, timeout_s=10.0):
    worker = ExternalWorker(mock_command(mode), timeout_s=timeout_s)
    try:
        return worker.evaluate(request)
    finally:
        worker.close()


def test_round_trip_const_score(toy_config):
    g = sample(toy_config, 2, branch_count=1)
    result = run_worker("const", eval_record(7, g.to_dict()))
    assert result["id"] == 7
    assert result["score"] == 63.1


def test_unknown_fields_are_ignored(toy_config):
    g = sample(toy_config, 3, branch_count=1)
    worker = ExternalWorker(mock_command("extras"), timeout_s=10.0)
    try:
        result = worker.evaluate(eval_record(1, g.to_dict(), calibrate=True))
        assert result["score"] == 63.1
        assert result["debug"]["calibrated"] is True
    finally:
        worker.close()


def test_hello_with_extra_fields_accepted(toy_config):
    g = sample(toy_config, 4, branch_count=1)
    assert run_worker("noisyhello", eval_record(2, g.to_dict()))["score"] == 63.1


def test_id_mismatch_raises(toy_config):
    g = sample(toy_config, 5, branch_count=1)
    with pytest.raises(ProtocolError, match="does not match"):
        run_worker("wrongid", eval_record(9, g.to_dict()))


def test_non_numeric_score_raises(toy_config):
    g = sample(toy_config, 6, branch_count=1)
    with pytest.raises(ProtocolError, match="numeric score"):
        run_worker("badscore", eval_record(3, g.to_dict()))


def test_malformed_line_raises(toy_config):
    g = sample(toy_config, 7, branch_count=1)
    with pytest.raises(ProtocolError, match="malformed"):
        run_worker("badjson", eval_record(4, g.to_dict()))


def test_timeout_raises(toy_config):
    g = sample(toy_config, 8, branch_count=1)
    with pytest.raises(EvaluationTimeout):
        run_worker("silent", eval_record(5, g.to_dict()), timeout_s=0.4)


def test_crash_raises(toy_config):
    g = sample(toy_config, 9, branch_count=1)
    with pytest.raises(EvaluatorCrash, match="closed its stream"):
        run_worker("crash", eval_record(6, g.to_dict()))


def test_version_mismatch_raises_at_handshake():
    with pytest.raises(ProtocolError, match="version mismatch"):
        ExternalWorker(mock_command("badversion"), timeout_s=10.0)


def test_unstartable_command_raises():
    with pytest.raises(EvaluatorCrash, match="could not start"):
        ExternalWorker("/definitely/not/a/real/binary-xyz", timeout_s=1.0)


def test_worker_pool_completes_batches(toy_config):
    pool = WorkerPool(mock_command("const"), workers=2, timeout_s=10.0)
    try:
        requests = [
            eval_record(i, sample(toy_config, i, branch_count=1).to_dict())
            for i in range(9)
        ]
        results = pool.evaluate_batch(requests)
        assert sorted(results) == list(range(9))
        assert all(results[i]["score"] == 63.1 for i in results)
    finally:
        pool.close()


def test_worker_pool_raises_first_failure(toy_config):
    pool = WorkerPool(mock_command("wrongid"), workers=2, timeout_s=10.0)
    try:
        requests = [
            eval_record(i, sample(toy_config, i, branch_count=1).to_dict())
            for i in range(4)
        ]
        with pytest.raises(ProtocolError):
            pool.evaluate_batch(requests)
    finally:
        pool.close()


def test_pool_evaluator_uses_analytic_costs(toy_config, unit_profile):
    evaluator = ExternalEvaluatorPool(
        toy_config, unit_profile, mock_command("const"), timeout_s=10.0
    )
    try:
        g = sample(toy_config, 10, branch_count=1)
        vector = evaluator.evaluate(g, 3)
        oracle = CostOracle(toy_config, unit_profile)
        bundle = oracle.bundle(g)
        assert vector.score == 63.1
        assert vector.source == "external"
        assert vector.latency_ms == bundle.latency_ms  # null latency falls back
        assert vector.flops_g == bundle.cost.flops_g
        assert vector.params_m == bundle.cost.params_m
    finally:
        evaluator.close()


def test_pool_evaluator_prefers_measured_latency(toy_config, unit_profile):
    evaluator = ExternalEvaluatorPool(
        toy_config, unit_profile, mock_command("latency"), timeout_s=10.0
    )
    try:
        g = sample(toy_config, 11, branch_count=1)
        vector = evaluator.evaluate(g, 1)
        assert vector.score == 50.0
        assert vector.latency_ms == pytest.approx(vector.flops_g * 2.5)
    finally:
        evaluator.close()


def test_search_front_matches_brute_force_under_mock_rule(toy_config, unit_profile):
    evaluator = ExternalEvaluatorPool(
        toy_config, unit_profile, mock_command("flops"), workers=2, timeout_s=30.0
    )
    try:
        params = Nsga2Params(
            population_size=8, generations=4, seed=5, branch_count=1
        )
        result = search(toy_config, params, evaluator)
    finally:
        evaluator.close()
    # recompute the mock's scoring rule engine-side and brute force the front
    oracle = CostOracle(toy_config, unit_profile)
    archived = result.archive.order
    for cand in archived:
        expected = round(oracle.bundle(cand.genome).cost.flops_g, 2)
        assert cand.objectives.score == expected
    vectors = [c.objectives for c in archived]
    want = {archived[i].candidate_id for i in brute_force_front(vectors, result.pair)}
    got = {c.candidate_id for c in result.front}
    assert got == want
