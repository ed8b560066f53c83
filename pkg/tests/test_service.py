"""HTTP routes: shapes, determinism and error mapping."""

import pytest

from util import toy_config as make_toy_config

TOY_SPACE = {"num_layers": 4}


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"
    assert body["version"]


def test_table1_rows(client):
    response = client.get("/api/table1")
    assert response.status_code == 200
    rows = response.json()["rows"]
    assert [row["operation"] for row in rows] == [
        "Convolution",
        "Lightweight Convolution",
        "Transformer (reference)",
        "Memory-efficient Self-attention",
    ]
    by_op = {row["operation"]: row for row in rows}
    assert by_op["Convolution"]["flops"] == 1207959552
    assert by_op["Convolution"]["params"] == 589824
    wider = client.get("/api/table1", params={"attention_bottleneck": 96}).json()["rows"]
    assert wider[3]["flops"] > by_op["Memory-efficient Self-attention"]["flops"]


def search_payload(**overrides):
    payload = {
        "space": TOY_SPACE,
        "params": {"population_size": 6, "generations": 2, "seed": 5, "branch_count": 1},
    }
    payload.update(overrides)
    return payload


def test_search_returns_front_export(client):
    response = client.post("/api/search", json=search_payload())
    assert response.status_code == 200
    doc = response.json()
    assert doc["schema"] == "front-export/1"
    assert doc["stats"]["evaluations"] == 6 * 2 + 6 * 2
    assert doc["front"]
    assert doc["space"]["num_layers"] == 4


def test_search_identical_requests_get_identical_bodies(client):
    a = client.post("/api/search", json=search_payload())
    b = client.post("/api/search", json=search_payload())
    assert a.content == b.content
    c = client.post(
        "/api/search",
        json=search_payload(
            params={"population_size": 6, "generations": 2, "seed": 6, "branch_count": 1}
        ),
    )
    assert c.json()["params"]["seed"] == 6
    assert c.content != a.content


def test_search_rejects_unknown_fields(client):
    assert client.post("/api/search", json=search_payload(budget=9)).status_code == 422
    bad_params = search_payload(
        params={"population_size": 6, "generations": 2, "pop": 4}
    )
    assert client.post("/api/search", json=bad_params).status_code == 422


def test_search_maps_engine_errors_to_400(client):
    response = client.post("/api/search", json=search_payload(space={"num_layers": 2}))
    assert response.status_code == 400
    detail = response.json()["detail"]
    assert detail["error"] == "ValueError"
    assert "num_layers" in detail["message"]


def test_search_infeasible_cap_maps_to_400(client):
    payload = search_payload(
        params={
            "population_size": 4,
            "generations": 1,
            "seed": 0,
            "latency_cap_ms": 1e-9,
            "init_attempt_factor": 1,
        }
    )
    response = client.post("/api/search", json=payload)
    assert response.status_code == 400
    assert response.json()["detail"]["error"] == "InfeasibleSpace"


def sample_genome(client, seed=3):
    body = client.post(
        "/api/space/sample", json={"space": TOY_SPACE, "seed": seed}
    ).json()
    return body["genomes"][0]["genome"]


def test_cost_report_totals_match_per_op(client):
    genome = sample_genome(client)
    response = client.post("/api/cost", json={"space": TOY_SPACE, "genome": genome})
    assert response.status_code == 200
    doc = response.json()
    assert doc["flops"] == sum(row["flops"] for row in doc["per_op"])
    assert doc["params"] == sum(row["params"] for row in doc["per_op"])
    assert doc["flops_g"] == pytest.approx(doc["flops"] / 1e9)
    assert doc["memory"]["passed"] is True
    assert doc["memory"]["budget_mb"] is None
    assert doc["memory"]["required_mb"] > 0
    for row in doc["per_op"]:
        assert set(row) == {
            "id", "kind", "layer", "row", "stride", "c_in", "c_out",
            "flops", "params", "act_mem",
        }
    assert doc["latency_ms"] > 0


def test_cost_with_memory_budget(client):
    genome = sample_genome(client)
    profile = {"name": "tight", "coefficients": {}, "memory_budget_mb": 0.001}
    doc = client.post(
        "/api/cost", json={"space": TOY_SPACE, "genome": genome, "profile": profile}
    ).json()
    assert doc["memory"]["passed"] is False
    assert doc["memory"]["required_mb"] > doc["memory"]["budget_mb"] == 0.001


def test_cost_rejects_inconsistent_genome_with_violations(client):
    genome = sample_genome(client, seed=8)
    genome["branch_count"] = 1
    genome["downsample_layers"] = [2, None]
    response = client.post("/api/cost", json={"space": TOY_SPACE, "genome": genome})
    assert response.status_code == 400
    detail = response.json()["detail"]
    assert detail["error"] == "ConstraintViolation"
    assert detail["violations"]
    assert all({"kind", "constraint", "location", "message"} <= set(v) for v in detail["violations"])


def test_cost_rejects_malformed_genome(client):
    response = client.post(
        "/api/cost", json={"space": TOY_SPACE, "genome": {"branch_count": 1}}
    )
    assert response.status_code == 400


def test_sample_is_deterministic_and_validates(client):
    payload = {"space": TOY_SPACE, "n": 5, "seed": 7, "with_cost": True}
    a = client.post("/api/space/sample", json=payload)
    b = client.post("/api/space/sample", json=payload)
    assert a.content == b.content
    body = a.json()
    assert [g["id"] for g in body["genomes"]] == [f"g{i}" for i in range(5)]
    for entry in body["genomes"]:
        assert set(entry["cost"]) == {"flops_g", "params_m", "latency_ms", "peak_act_mem"}
        verdict = client.post(
            "/api/space/validate", json={"space": TOY_SPACE, "genome": entry["genome"]}
        ).json()
        assert verdict == {"valid": True, "violations": []}


def test_sample_pins_branch_count(client):
    body = client.post(
        "/api/space/sample", json={"space": TOY_SPACE, "n": 6, "seed": 1, "branch_count": 2}
    ).json()
    assert all(g["genome"]["branch_count"] == 2 for g in body["genomes"])


def test_validate_reports_instead_of_failing(client):
    genome = sample_genome(client, seed=4)
    genome["downsample_layers"] = [2, None]
    genome["branch_count"] = 1
    verdict = client.post(
        "/api/space/validate", json={"space": TOY_SPACE, "genome": genome}
    ).json()
    assert verdict["valid"] is False
    assert verdict["violations"]


def test_baseline_random_export(client):
    payload = {"space": TOY_SPACE, "n": 25, "seed": 3, "branch_count": 2}
    doc = client.post("/api/baseline/random", json=payload).json()
    assert doc["schema"] == "baseline-export/1"
    assert doc["baseline"] == "random"
    assert doc["stats"]["evaluations"] == 25
    assert len(doc["candidates"]) == 25
    assert all(c["genome"]["branch_count"] == 2 for c in doc["candidates"])
    assert set(doc["front"]) <= {c["id"] for c in doc["candidates"]}


def test_baseline_local_export(client):
    payload = {
        "space": TOY_SPACE,
        "seeds": 2,
        "iterations": 4,
        "neighbors_per_iter": 3,
        "seed": 9,
    }
    doc = client.post("/api/baseline/local", json=payload).json()
    assert doc["baseline"] == "local"
    assert doc["stats"]["evaluations"] == 2 * (1 + 4 * 3)
    assert doc["stats"]["moves"] + doc["stats"]["stalls"] == 2 * 4


def test_correlate_worked_example(client):
    body = client.post("/api/correlate", json={"x": [1, 2, 3, 4], "y": [1, 3, 2, 4]}).json()
    assert body["n"] == 4
    assert round(body["kendall_tau"], 4) == 0.6667
    assert body["pearson_r"] == pytest.approx(0.8)


def test_correlate_error_mapping(client):
    response = client.post("/api/correlate", json={"x": [1, 1, 1], "y": [1, 2, 3]})
    assert response.status_code == 400
    assert response.json()["detail"]["error"] == "ZeroVariance"
    response = client.post("/api/correlate", json={"x": [1, 2], "y": [1, 2, 3]})
    assert response.status_code == 400
    assert response.json()["detail"]["error"] == "LengthMismatch"


def test_external_evaluator_over_the_wire(client, mock_cmd):
    payload = search_payload(
        params={"population_size": 4, "generations": 1, "seed": 2, "branch_count": 1},
        evaluator={"type": "external", "command": mock_cmd("const"), "timeout_s": 10.0},
    )
    doc = client.post("/api/search", json=payload).json()
    assert all(c["objectives"]["source"] == "external" for c in doc["candidates"])
    assert all(c["objectives"]["score"] == 63.1 for c in doc["candidates"])


def test_external_evaluator_crash_maps_to_502(client, mock_cmd):
    payload = search_payload(
        evaluator={"type": "external", "command": mock_cmd("crash"), "timeout_s": 5.0}
    )
    response = client.post("/api/search", json=payload)
    assert response.status_code == 502
    assert response.json()["detail"]["error"] == "EvaluatorCrash"


def test_external_evaluator_requires_a_command(client):
    response = client.post(
        "/api/search", json=search_payload(evaluator={"type": "external"})
    )
    assert response.status_code == 400
    assert "command" in response.json()["detail"]["message"]
