import pytest
from fastapi.testclient import TestClient

from csketch.service import create_app
from csketch.store import DataStore

from conftest import small_config


@pytest.fixture()
def service(tmp_path, demo_bundle):
    data_dir = tmp_path / "data"
    DataStore.initialize(data_dir, small_config()).close()
    app = create_app(data_dir)
    with TestClient(app) as client:
        yield client


def ingest_all(client, demo_bundle):
    _, streams, _ = demo_bundle
    last = None
    for user in sorted(streams):
        response = client.post(
            "/ingest", content=streams[user], headers={"content-type": "text/plain"}
        )
        assert response.status_code == 200
        last = response.json()
    return last


def test_health(service):
    body = service.get("/health").json()
    assert body["status"] == "ok"


def test_ingest_and_trace_flow(service, demo_bundle):
    last = ingest_all(service, demo_bundle)
    assert last["streams"] == 1
    assert last["parseErrors"] == 0

    response = service.post("/trace", json={"infected": ["P2", "P6"], "levels": 3})
    assert response.status_code == 200
    body = response.json()
    assert body["infected"] == ["P2", "P6"]
    got = {(e["user"], e["level"]) for e in body["entries"]}
    assert got == {
        ("P0", 1), ("P7", 1), ("P8", 1), ("P5", 2), ("P3", 3),
        ("P1", 1), ("P4", 2), ("P9", 2),
    }
    edges = {(e["source"], e["target"]) for e in body["edges"]}
    assert edges == {
        ("P2", "P0"), ("P2", "P7"), ("P2", "P8"), ("P0", "P5"), ("P5", "P3"),
        ("P6", "P1"), ("P1", "P4"), ("P1", "P9"),
    }

    clusters = service.get("/clusters").json()["clusters"]
    assert sorted(c["size"] for c in clusters) == [4, 6]

    stats = service.get("/stats").json()
    assert stats["edges"] == 10
    assert stats["now_slot"] == 5


def test_trace_validation_errors(service):
    assert service.post("/trace", json={"infected": ["P2"], "levels": 0}).status_code == 422
    assert service.post("/trace", json={"infected": [], "levels": 1}).status_code == 422
    response = service.post("/trace", json={"infected": ["P55"], "levels": 1})
    assert response.status_code == 422
    assert "unknown user" in response.json()["detail"]


def test_ingest_reports_malformed_stream(service):
    response = service.post("/ingest", content=b"garbage\n", headers={"content-type": "text/plain"})
    assert response.status_code == 200
    body = response.json()
    assert body["parseErrors"] == 1
    assert body["diagnostics"]


def test_sweep_endpoint(service, demo_bundle):
    # manual sweep is a no-op right after the automatic one
    ingest_all(service, demo_bundle)
    assert service.post("/sweep").json() == {"edges_expired": 0}


def test_state_persists_across_service_restarts(tmp_path, demo_bundle):
    data_dir = tmp_path / "data"
    DataStore.initialize(data_dir, small_config()).close()
    with TestClient(create_app(data_dir)) as client:
        ingest_all(client, demo_bundle)
        client.post("/trace", json={"infected": ["P2"], "levels": 3})
    with TestClient(create_app(data_dir)) as client:
        stats = client.get("/stats").json()
        assert stats["infected"] == 1
        assert stats["suspected"] == 5
        clusters = client.get("/clusters").json()["clusters"]
        assert len(clusters) == 1 and clusters[0]["size"] == 6
