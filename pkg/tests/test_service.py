"""HTTP surface: request validation, error mapping, canonical bodies."""

import json
import os

from fastapi.testclient import TestClient

from gluedheat.service import API_VERSION, app

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")

client = TestClient(app, raise_server_exceptions=False)


def load(name):
    with open(os.path.join(CONFIG_DIR, name)) as fh:
        return json.load(fh)


def test_health():
    r = client.get("/health")
    assert r.status_code == 200
    assert r.json() == {"status": "ok", "api_version": API_VERSION}


def test_validate_ok_and_hash_stability():
    cfg = load("build_cross_segments.json")
    r1 = client.post("/validate", json={"config": cfg})
    r2 = client.post("/validate", json={"config": cfg})
    assert r1.status_code == 200
    b1, b2 = r1.json(), r2.json()
    assert b1["status"] == "ok"
    assert b1["config_hash"] == b2["config_hash"]
    assert b1["resolved"]["task"] == "build"


def test_validate_rejects_unknown_key():
    cfg = load("build_cross_segments.json")
    cfg["space"]["pieces"][0]["mystery"] = 1
    r = client.post("/validate", json={"config": cfg})
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "config-error"
    assert "mystery" in body["error"]["message"]


def test_run_build_ok():
    cfg = load("build_cross_segments.json")
    r = client.post("/run", json={"config": cfg, "config_dir": CONFIG_DIR})
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "ok" and body["exit_code"] == 0
    # canonical text round-trips to the structured report
    assert json.loads(body["report_json"]) == body["report"]
    assert body["report"]["results"]["n_components"] == 1
    assert "dofs.csv" in body["files"]


def test_run_seed_override():
    cfg = load("walk_path_disk_spine.json")
    r = client.post("/run", json={"config": cfg, "config_dir": CONFIG_DIR,
                                  "seed": 123})
    assert r.json()["report"]["seed"] == 123


def test_run_hypothesis_violation_maps_to_3():
    cfg = load("check_weights_nonintegrable.json")
    r = client.post("/run", json={"config": cfg, "config_dir": CONFIG_DIR})
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "hypothesis-violation"
    assert body["exit_code"] == 3
    assert body["error"]["kind"] == "NonIntegrableWeightError"
    assert body["report"] is None


def test_run_config_error_maps_to_2():
    r = client.post("/run", json={"config": {"task": "build"}})
    body = r.json()
    assert body["status"] == "config-error" and body["exit_code"] == 2


def test_malformed_request_is_422():
    r = client.post("/run", json={"not-a-config": 1})
    assert r.status_code == 422


def test_run_mesh_file_relative_to_config_dir():
    import yaml

    with open(os.path.join(CONFIG_DIR, "build_sheets.yaml")) as fh:
        cfg = yaml.safe_load(fh)
    r = client.post("/run", json={"config": cfg, "config_dir": CONFIG_DIR})
    body = r.json()
    assert body["status"] == "ok"
    inter = body["report"]["results"]["intersections"][0]
    assert inter["k"] == 1 and inter["n_dofs"] == 9
