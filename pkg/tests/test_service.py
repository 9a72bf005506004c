import json

import pytest
from fastapi.testclient import TestClient

from conftest import FEEDER_DIR
from mdopf.service.app import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


@pytest.fixture(scope="module")
def twobus_doc():
    return json.loads((FEEDER_DIR / "twobus.json").read_text())


@pytest.fixture(scope="module")
def eightbus_doc():
    return json.loads((FEEDER_DIR / "eightbus.json").read_text())


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json()["status"] == "ok"


class TestSolve:
    def test_linear_model(self, client, twobus_doc):
        response = client.post("/solve", json={"feeder": twobus_doc,
                                               "model": "lp-d-e"})
        assert response.status_code == 200
        body = response.json()
        assert body["objective"] == pytest.approx(0.3, abs=1e-9)
        assert body["iterations"] == 0
        slack_row = body["buses"][0]
        assert slack_row["bus"] == "0" and slack_row["va_deg"] is None
        assert len(body["loads"]) == 3
        assert body["limit_violations"] == []

    def test_sweep_model(self, client, twobus_doc):
        response = client.post("/solve", json={"feeder": twobus_doc,
                                               "model": "ac-d-e"})
        assert response.status_code == 200
        body = response.json()
        assert body["converged"] and body["iterations"] >= 1
        assert body["max_mismatch"] <= 1e-8
        assert body["buses"][0]["va_deg"] == pytest.approx(0.0, abs=1e-9)

    def test_unknown_model_is_422(self, client, twobus_doc):
        response = client.post("/solve", json={"feeder": twobus_doc,
                                               "model": "sdp-d"})
        assert response.status_code == 422

    def test_parse_error_is_400(self, client):
        response = client.post("/solve", json={"feeder": {"sbase_kva": 1.0},
                                               "model": "lp-d-e"})
        assert response.status_code == 400
        assert response.json()["detail"]["type"] == "ParseError"

    def test_validation_error_is_400_with_violations(self, client, twobus_doc):
        doc = json.loads(json.dumps(twobus_doc))
        doc["buses"].append({"id": "orphan", "phases": "abc"})
        response = client.post("/solve", json={"feeder": doc, "model": "lp-d-e"})
        assert response.status_code == 400
        detail = response.json()["detail"]
        assert detail["type"] == "ValidationError"
        assert detail["violations"]

    def test_nonconvergence_is_409(self, client, twobus_doc):
        doc = json.loads(json.dumps(twobus_doc))
        doc["loads"][0]["s0_pu"] = [[13.0, 5.0]] * 3
        response = client.post("/solve", json={"feeder": doc, "model": "ac-d-e"})
        assert response.status_code == 409
        assert response.json()["detail"]["type"] == "NotConverged"


class TestValidateEndpoint:
    def test_valid_feeder(self, client, twobus_doc):
        response = client.post("/validate", json={"feeder": twobus_doc})
        assert response.status_code == 200
        assert response.json() == {"valid": True, "violations": []}

    def test_invalid_feeder_reports(self, client, twobus_doc):
        doc = json.loads(json.dumps(twobus_doc))
        doc["buses"].append({"id": "orphan", "phases": "abc"})
        response = client.post("/validate", json={"feeder": doc})
        assert response.status_code == 200
        body = response.json()
        assert not body["valid"]
        assert any("not a tree" in v["message"] for v in body["violations"])


class TestStudies:
    def test_compare(self, client, eightbus_doc):
        response = client.post("/compare", json={
            "feeder": eightbus_doc, "name": "eightbus",
            "models": ["lp-d-e", "ac-w-e"]})
        assert response.status_code == 200
        records = response.json()["records"]
        assert [r["model"] for r in records] == ["lp-d-e", "ac-w-e"]
        assert records[0]["dw_pct"] < records[1]["dw_pct"]

    def test_exponent_sweep(self, client, twobus_doc):
        response = client.post("/sweep/exponent",
                               json={"feeder": twobus_doc, "alphas": [0.0, 2.0]})
        assert response.status_code == 200
        records = response.json()["records"]
        assert all(r["obj_lp"] <= r["obj_ac"] for r in records)

    def test_vref_sweep(self, client, twobus_doc):
        response = client.post("/sweep/vref",
                               json={"feeder": twobus_doc, "factors": [1.0, 0.9]})
        assert response.status_code == 200
        assert len(response.json()["records"]) == 2

    def test_vuf_sweep_deterministic(self, client, twobus_doc):
        payload = {"feeder": twobus_doc, "targets": [2.0], "samples": 3, "seed": 5}
        first = client.post("/sweep/vuf", json=payload)
        second = client.post("/sweep/vuf", json=payload)
        assert first.status_code == 200
        assert first.json() == second.json()
        assert len(first.json()["records"]) == 3
        assert len(first.json()["summaries"]) == 5
