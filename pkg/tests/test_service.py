"""HTTP API: routing, validation bounds, and CLI/HTTP byte-identity."""

import json

import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from nvpulse import ENGINE_VERSION
from nvpulse.analysis import trace_to_csv
from nvpulse.cli import main
from nvpulse.service import create_app

from conftest import counts_csv

SIMULATE_BODY = {
    "system": {"nitrogen": "none", "b0_T": 0.01},
    "protocol": "rabi",
    "tau": {"start_us": 0.002, "stop_us": 0.05, "points": 12},
    "spp": 16,
}


@pytest.fixture(scope="module")
def client(mini_store):
    return TestClient(create_app(mini_store))


def test_health_and_version_header(client):
    response = client.get("/v1/health")
    assert response.status_code == 200
    assert response.json() == {"status": "ok", "engine_version": ENGINE_VERSION}
    assert response.headers["x-engine-version"] == ENGINE_VERSION
    # the header rides on errors too
    missing = client.get("/v1/records/nope/trace")
    assert missing.status_code == 404
    assert missing.headers["x-engine-version"] == ENGINE_VERSION


def test_records_listing_and_filters(client, mini_records):
    listing = client.get("/v1/records")
    assert listing.status_code == 200
    body = listing.json()
    assert body["count"] == 2
    assert [r["record_id"] for r in body["records"]] == [
        rec.record_id for rec in mini_records
    ]
    entry = body["records"][0]
    assert entry["isotope"] == "n15"
    assert entry["b0_T"] == 0.024
    assert entry["trace_url"].endswith(f"/records/{entry['record_id']}/trace")

    filtered = client.get("/v1/records", params={"transition": "plus_one"})
    assert filtered.json()["count"] == 1
    empty = client.get("/v1/records", params={"theta_deg": 45.0})
    assert empty.json()["count"] == 0


def test_records_missing_index_503(tmp_path):
    bare = TestClient(create_app(tmp_path))
    assert bare.get("/v1/records").status_code == 503
    assert bare.get("/v1/records/x/trace").status_code == 503


def test_record_trace_bytes(client, mini_records):
    record = mini_records[0]
    response = client.get(f"/v1/records/{record.record_id}/trace")
    assert response.status_code == 200
    assert response.headers["content-type"].startswith("text/csv")
    assert response.content == trace_to_csv(record.trace).encode()


def test_simulate_matches_cli_bytes(client, tmp_path):
    response = client.post("/v1/simulate", json=SIMULATE_BODY)
    assert response.status_code == 200, response.text
    body = response.json()
    assert body["engine_version"] == ENGINE_VERSION
    assert body["metadata"]["protocol"] == "rabi"

    system_path = tmp_path / "system.cfg"
    system_path.write_text("[system]\nnitrogen = none\nb0_T = 0.01\n")
    out = tmp_path / "trace.csv"
    result = CliRunner().invoke(main, [
        "simulate", "--system", str(system_path), "--protocol", "rabi",
        "--tau", "0.002:0.05:12", "--out", str(out), "--spp", "16",
    ])
    assert result.exit_code == 0, result.output
    assert out.read_text() == body["trace_csv"]


def test_simulate_validation_422(client):
    cases = [
        {"tau": {"start_us": 0.002, "stop_us": 0.05, "points": 10**6}},
        {"tau": {"start_us": 0.5, "stop_us": 0.1, "points": 16}},
        {"m": 32},
        {"protocol": "cpmg"},
        {"protocol": "rxy8"},  # no seed
        {"rabi_MHz": -3.0},
        {"spp": 4},
    ]
    for overrides in cases:
        body = {**SIMULATE_BODY, **overrides}
        response = client.post("/v1/simulate", json=body)
        assert response.status_code == 422, (overrides, response.text)


def test_simulate_bad_physics_422(client):
    # rejected past pydantic, by the same validation the CLI runs
    body = {
        **SIMULATE_BODY,
        "system": {
            "nitrogen": "n15", "b0_T": 0.024,
            "target": {
                "gamma_MHzT": 10.705,
                "a_MHz": [[0, 1, 0], [0, 0, 0], [0, 0, 0]],
            },
        },
    }
    response = client.post("/v1/simulate", json=body)
    assert response.status_code == 422
    assert "symmetric" in response.json()["detail"]


def test_simulate_busy_slot_503(client):
    slot = client.app.state.simulate_slot
    assert slot.acquire(blocking=False)
    try:
        response = client.post("/v1/simulate", json=SIMULATE_BODY)
        assert response.status_code == 503
        assert "busy" in response.json()["detail"]
    finally:
        slot.release()
    assert client.post("/v1/simulate", json=SIMULATE_BODY).status_code == 200


def test_compare_multipart_matches_cli(client, mini_store, mini_records,
                                       tmp_path):
    planted = mini_records[1]
    csv_text = counts_csv(planted)
    response = client.post(
        "/v1/compare",
        files={"file": ("exp.csv", csv_text.encode(), "text/csv")},
        data={"top_k": "2"},
    )
    assert response.status_code == 200, response.text
    body = response.json()
    assert body["skipped_rows"] == []
    assert body["ranking"][0]["rank"] == 1
    assert body["ranking"][0]["record"]["record_id"] == planted.record_id
    assert body["ranking"][0]["r"] > 0.95
    assert body["unranked"] == []

    exp_path = tmp_path / "exp.csv"
    exp_path.write_text(csv_text)
    out = tmp_path / "ranking.csv"
    result = CliRunner().invoke(main, [
        "compare", "--exp", str(exp_path), "--data", str(mini_store),
        "--top", "2", "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    assert out.read_text() == body["ranking_csv"]


def test_compare_reports_skipped_rows(client):
    lines = ["tau_us,counts"] + [f"0.{i + 1},{100 + i}" for i in range(9)]
    lines.insert(4, "oops")
    response = client.post(
        "/v1/compare",
        files={"file": ("exp.csv", "\n".join(lines).encode(), "text/csv")},
    )
    assert response.status_code == 200, response.text
    assert response.json()["skipped_rows"] == [5]

    strict = client.post(
        "/v1/compare",
        files={"file": ("exp.csv", "\n".join(lines).encode(), "text/csv")},
        data={"strict": "true"},
    )
    assert strict.status_code == 400
    assert "line 5" in strict.json()["detail"]


def test_compare_error_mapping(client, mini_records):
    csv_text = counts_csv(mini_records[0])
    no_match = client.post(
        "/v1/compare",
        files={"file": ("exp.csv", csv_text.encode(), "text/csv")},
        data={"isotope": "n14"},
    )
    assert no_match.status_code == 404
    garbage = client.post(
        "/v1/compare",
        files={"file": ("exp.csv", b"\xff\xfe\x00bad", "text/csv")},
    )
    assert garbage.status_code == 400
    assert "UTF-8" in garbage.json()["detail"]


def test_build_endpoint_disabled_by_default(client):
    response = client.post("/v1/dataset/build", json={"grid": "[grid]"})
    assert response.status_code == 403


def test_build_endpoint_when_enabled(tmp_path):
    writable = TestClient(create_app(tmp_path, allow_build=True))
    bad = writable.post("/v1/dataset/build", json={"grid": "[grid]\n"})
    assert bad.status_code == 400

    grid_text = (
        "[grid]\nisotope = n15\nb0_mT = 24\ntheta_deg = 2.7\nm = 1\n"
        "transition = minus_one\n\n"
        "[tau]\nstart_us = 0.1\nstop_us = 2.0\npoints = 64\n"
    )
    response = writable.post("/v1/dataset/build", json={"grid": grid_text})
    assert response.status_code == 200, response.text
    assert response.json()["written"] == 1
    assert writable.get("/v1/records").json()["count"] == 1


def test_openapi_is_versioned(client):
    # every route lives under /v1 so the UI can pin its base path
    paths = client.get("/openapi.json").json()["paths"]
    assert paths
    assert all(path.startswith("/v1/") for path in paths)
