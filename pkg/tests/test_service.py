from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from listenloop.config import AppConfig, LabelerConfig
from listenloop.ingestion import EmbeddingPool, generate_synthetic_pool
from listenloop.persistence import Database
from listenloop.service import AppState, create_app

from .conftest import WINDOW_END, WINDOW_START, make_catalog

OPERATOR = {"Authorization": "Bearer op-token"}
ANA = {"Authorization": "Bearer tok-ana"}
BEN = {"Authorization": "Bearer tok-ben"}
CAM = {"Authorization": "Bearer tok-cam"}
DEE = {"Authorization": "Bearer tok-dee"}


@pytest.fixture
def client():
    records, truth = generate_synthetic_pool(3, 30, 8, 0.35, seed=21)
    db, class_ids = make_catalog(
        records,
        groups={"g1": ["ana", "ben", "cam"], "g2": ["dee", "eli"]},
        k_classes=3,
    )
    config = AppConfig(
        storage=":memory:",
        budget=8,
        n_smax=500,
        operator_token="op-token",
        labelers=[
            LabelerConfig("ana", "tok-ana", "g1"),
            LabelerConfig("ben", "tok-ben", "g1"),
            LabelerConfig("cam", "tok-cam", "g1"),
            LabelerConfig("dee", "tok-dee", "g2"),
            LabelerConfig("eli", "tok-eli", "g2"),
        ],
    )
    state = AppState(config, db, EmbeddingPool(records))
    test_client = TestClient(create_app(state))
    test_client.world = {
        "db": db, "class_ids": class_ids, "truth": truth, "state": state,
    }
    return test_client


def start_iteration(client, budget=8):
    response = client.post("/iterations", headers=OPERATOR, json={
        "node_id": "sim00",
        "window_start": WINDOW_START.isoformat(),
        "window_end": WINDOW_END.isoformat(),
        "budget": budget,
    })
    assert response.status_code == 201, response.text
    return response.json()


def label_everything(client, iteration_id, noise_for=()):
    """All five labelers annotate their pending items with the true class."""
    world = client.world
    tokens = {"ana": ANA, "ben": BEN, "cam": CAM, "dee": DEE,
              "eli": {"Authorization": "Bearer tok-eli"}}
    for labeler, header in tokens.items():
        items = client.get(
            f"/iterations/{iteration_id}/proposals", params={"labeler": labeler},
            headers=header,
        ).json()["items"]
        for item in items:
            cls = world["class_ids"][world["truth"][item["audio_id"]]]
            response = client.post("/annotations", headers=header, json={
                "audio_id": item["audio_id"],
                "chunks": [{"class_id": cls, "onset": 0.0, "offset": 10.0}],
            })
            assert response.status_code == 200, response.text


class TestAuth:
    def test_missing_token_rejected(self, client):
        assert client.post("/iterations", json={}).status_code == 401

    def test_unknown_token_rejected(self, client):
        response = client.get("/ontology", headers={"Authorization": "Bearer nope"})
        assert response.status_code == 401

    def test_labeler_cannot_create_iterations(self, client):
        response = client.post("/iterations", headers=ANA, json={
            "node_id": "sim00",
            "window_start": WINDOW_START.isoformat(),
            "window_end": WINDOW_END.isoformat(),
        })
        assert response.status_code == 401


class TestIterations:
    def test_create_reports_budget_proposals(self, client):
        summary = start_iteration(client)
        assert summary["proposal_count"] == 8
        assert summary["path"] == "bootstrap"

    def test_conflict_while_window_locked(self, client):
        state = client.world["state"]
        lock = state.engine.window_lock("sim00", WINDOW_START, WINDOW_END)
        assert lock.acquire(blocking=False)
        try:
            response = client.post("/iterations", headers=OPERATOR, json={
                "node_id": "sim00",
                "window_start": WINDOW_START.isoformat(),
                "window_end": WINDOW_END.isoformat(),
            })
            assert response.status_code == 409
        finally:
            lock.release()

    def test_empty_window_rejected(self, client):
        response = client.post("/iterations", headers=OPERATOR, json={
            "node_id": "sim00",
            "window_start": "2031-01-01T00:00:00+00:00",
            "window_end": "2031-01-02T00:00:00+00:00",
        })
        assert response.status_code == 422

    def test_unknown_iteration_404(self, client):
        assert client.get("/iterations/nope", headers=OPERATOR).status_code == 404
        response = client.get(
            "/iterations/nope/proposals", params={"labeler": "ana"}, headers=ANA
        )
        assert response.status_code == 404


class TestWorklists:
    def test_batch_split_in_half_between_groups(self, client):
        summary = start_iteration(client)
        ana_items = client.get(
            f"/iterations/{summary['iteration_id']}/proposals",
            params={"labeler": "ana"}, headers=ANA,
        ).json()["items"]
        dee_items = client.get(
            f"/iterations/{summary['iteration_id']}/proposals",
            params={"labeler": "dee"}, headers=DEE,
        ).json()["items"]
        assert len(ana_items) == 4 and len(dee_items) == 4
        assert not (
            {i["audio_id"] for i in ana_items} & {i["audio_id"] for i in dee_items}
        )
        # stable ordering by rank
        assert [i["rank"] for i in ana_items] == sorted(i["rank"] for i in ana_items)

    def test_worklist_empties_after_annotating(self, client):
        summary = start_iteration(client)
        label_everything(client, summary["iteration_id"])
        items = client.get(
            f"/iterations/{summary['iteration_id']}/proposals",
            params={"labeler": "ana"}, headers=ANA,
        ).json()["items"]
        assert items == []

    def test_labeler_token_cannot_read_other_worklist(self, client):
        summary = start_iteration(client)
        response = client.get(
            f"/iterations/{summary['iteration_id']}/proposals",
            params={"labeler": "dee"}, headers=ANA,
        )
        assert response.status_code == 401


class TestAnnotations:
    def test_valid_submission_returns_agreement(self, client):
        summary = start_iteration(client)
        item = client.get(
            f"/iterations/{summary['iteration_id']}/proposals",
            params={"labeler": "ana"}, headers=ANA,
        ).json()["items"][0]
        cls = client.world["class_ids"][0]
        response = client.post("/annotations", headers=ANA, json={
            "audio_id": item["audio_id"],
            "chunks": [{"class_id": cls, "onset": 1.0, "offset": 4.5}],
        })
        assert response.status_code == 200
        body = response.json()
        assert body["labeler_count"] == 1
        assert body["agreement"] == pytest.approx(1 / 3)

    def test_inverted_interval_rejected(self, client):
        summary = start_iteration(client)
        item = client.get(
            f"/iterations/{summary['iteration_id']}/proposals",
            params={"labeler": "ana"}, headers=ANA,
        ).json()["items"][0]
        response = client.post("/annotations", headers=ANA, json={
            "audio_id": item["audio_id"],
            "chunks": [{"class_id": client.world["class_ids"][0], "onset": 4.0, "offset": 3.0}],
        })
        assert response.status_code == 422

    def test_cross_group_submission_blocked(self, client):
        summary = start_iteration(client)
        dee_item = client.get(
            f"/iterations/{summary['iteration_id']}/proposals",
            params={"labeler": "dee"}, headers=DEE,
        ).json()["items"][0]
        response = client.post("/annotations", headers=ANA, json={
            "audio_id": dee_item["audio_id"],
            "chunks": [{"class_id": client.world["class_ids"][0], "onset": 0.0, "offset": 10.0}],
        })
        assert response.status_code == 409

    def test_unproposed_audio_blocked(self, client):
        start_iteration(client)
        response = client.post("/annotations", headers=ANA, json={
            "audio_id": "sim00_20990101T000000Z",
            "chunks": [{"class_id": client.world["class_ids"][0], "onset": 0.0, "offset": 10.0}],
        })
        assert response.status_code == 409


class TestConsensusAndDoubt:
    def test_consensus_promotes_unanimous_labels(self, client):
        summary = start_iteration(client)
        label_everything(client, summary["iteration_id"])
        response = client.post(
            f"/iterations/{summary['iteration_id']}/consensus", headers=OPERATOR
        )
        assert response.status_code == 200
        body = response.json()
        assert body["outcomes"] == 8
        assert body["promoted"] == 8
        assert body["consensus_yield"] == 1.0

    def test_doubt_flow(self, client):
        summary = start_iteration(client)
        doubt_id = client.get("/ontology", headers=ANA).json()["doubt_class_id"]
        item = client.get(
            f"/iterations/{summary['iteration_id']}/proposals",
            params={"labeler": "ana"}, headers=ANA,
        ).json()["items"][0]
        client.post("/annotations", headers=ANA, json={
            "audio_id": item["audio_id"],
            "chunks": [{"class_id": doubt_id, "onset": 0.0, "offset": 10.0}],
        })
        worklist = client.get("/doubts", params={"labeler": "ana"}, headers=ANA).json()
        assert len(worklist["items"]) == 1
        chunk_id = worklist["items"][0]["chunk_id"]
        cls = client.world["class_ids"][client.world["truth"][item["audio_id"]]]
        response = client.post(f"/doubts/{chunk_id}/resolution", headers=ANA, json={
            "class_id": cls,
        })
        assert response.status_code == 200
        assert response.json()["class_id"] == cls
        assert client.get("/doubts", params={"labeler": "ana"}, headers=ANA).json()["items"] == []

    def test_resolving_someone_elses_doubt_blocked(self, client):
        summary = start_iteration(client)
        doubt_id = client.get("/ontology", headers=ANA).json()["doubt_class_id"]
        item = client.get(
            f"/iterations/{summary['iteration_id']}/proposals",
            params={"labeler": "ana"}, headers=ANA,
        ).json()["items"][0]
        client.post("/annotations", headers=ANA, json={
            "audio_id": item["audio_id"],
            "chunks": [{"class_id": doubt_id, "onset": 0.0, "offset": 10.0}],
        })
        chunk_id = client.get(
            "/doubts", params={"labeler": "ana"}, headers=ANA
        ).json()["items"][0]["chunk_id"]
        response = client.post(f"/doubts/{chunk_id}/resolution", headers=BEN, json={
            "class_id": client.world["class_ids"][0],
        })
        assert response.status_code == 409


class TestOntologySuggestions:
    def test_suggestion_available_next_iteration_only(self, client):
        first = start_iteration(client)
        response = client.post("/ontology/suggestions", headers=ANA, json={"name": "Fog horn"})
        assert response.status_code == 201
        body = response.json()
        assert body["status"] == "approved"
        assert body["available_from_seq"] == 2
        new_cls = body["class_id"]
        # not usable on this iteration's audio
        item = client.get(
            f"/iterations/{first['iteration_id']}/proposals",
            params={"labeler": "ana"}, headers=ANA,
        ).json()["items"][0]
        blocked = client.post("/annotations", headers=ANA, json={
            "audio_id": item["audio_id"],
            "chunks": [{"class_id": new_cls, "onset": 0.0, "offset": 10.0}],
        })
        assert blocked.status_code == 422
        # usable on the next iteration's audio
        second = start_iteration(client)
        item2 = client.get(
            f"/iterations/{second['iteration_id']}/proposals",
            params={"labeler": "ana"}, headers=ANA,
        ).json()["items"][0]
        allowed = client.post("/annotations", headers=ANA, json={
            "audio_id": item2["audio_id"],
            "chunks": [{"class_id": new_cls, "onset": 0.0, "offset": 10.0}],
        })
        assert allowed.status_code == 200

    def test_duplicate_active_name_conflict(self, client):
        response = client.post(
            "/ontology/suggestions", headers=ANA, json={"name": "class-00"}
        )
        assert response.status_code == 409


class TestDashboard:
    def test_projection_roles_partition_with_medoid_count(self, client):
        first = start_iteration(client)
        label_everything(client, first["iteration_id"])
        client.post(f"/iterations/{first['iteration_id']}/consensus", headers=OPERATOR)
        second = start_iteration(client)
        body = client.get(
            "/dashboard/projection", params={"iteration": second["iteration_id"]},
            headers=OPERATOR,
        ).json()
        points = body["points"]
        roles = {}
        for p in points:
            roles[p["role"]] = roles.get(p["role"], 0) + 1
        assert set(roles) == {"medoid", "proposed", "discarded"}
        assert roles["medoid"] == second["medoid_count"]
        assert roles["proposed"] == second["proposal_count"]
        assert len({p["audio_id"] for p in points}) == len(points)

    def test_projection_deterministic(self, client):
        summary = start_iteration(client)
        first = client.get(
            "/dashboard/projection", params={"iteration": summary["iteration_id"]},
            headers=OPERATOR,
        ).json()
        second = client.get(
            "/dashboard/projection", params={"iteration": summary["iteration_id"]},
            headers=OPERATOR,
        ).json()
        assert first == second

    def test_projection_unknown_iteration_404(self, client):
        response = client.get(
            "/dashboard/projection", params={"iteration": "nope"}, headers=OPERATOR
        )
        assert response.status_code == 404

    def test_histogram_mirrors_store(self, client):
        summary = start_iteration(client)
        label_everything(client, summary["iteration_id"])
        body = client.get("/dashboard/histogram", params={"top": 2}, headers=OPERATOR).json()
        expected = client.world["db"].tag_frequency_histogram(2)
        assert [(e["class_id"], e["name"], e["count"]) for e in body["entries"]] == expected

    def test_healthz_open(self, client):
        assert client.get("/healthz").json()["status"] == "ok"


class TestRestartDurability:
    def test_committed_data_survives_a_service_restart(self, tmp_path):
        records, truth = generate_synthetic_pool(3, 30, 8, 0.35, seed=21)
        storage = tmp_path / "svc.db"
        db, class_ids = make_catalog(
            records,
            groups={"g1": ["ana", "ben", "cam"], "g2": ["dee", "eli"]},
            k_classes=3,
            path=str(storage),
        )
        config = AppConfig(
            storage=str(storage),
            budget=6,
            n_smax=500,
            operator_token="op-token",
            labelers=[LabelerConfig("ana", "tok-ana", "g1")],
        )
        first = TestClient(create_app(AppState(config, db, EmbeddingPool(records))))
        summary = first.post("/iterations", headers=OPERATOR, json={
            "node_id": "sim00",
            "window_start": WINDOW_START.isoformat(),
            "window_end": WINDOW_END.isoformat(),
        }).json()
        db.close()

        # a fresh process: new store handle, new app, same file
        reopened = Database(str(storage))
        reopened.migrate()
        second = TestClient(create_app(AppState(config, reopened, EmbeddingPool(records))))
        status = second.get(f"/iterations/{summary['iteration_id']}", headers=OPERATOR)
        assert status.status_code == 200
        assert status.json()["proposal_count"] == 6


class TestStaticConsole:
    def test_console_bundle_served_when_configured(self, tmp_path):
        console = tmp_path / "console"
        console.mkdir()
        (console / "index.html").write_text("<!doctype html><title>console</title>")
        records, _ = generate_synthetic_pool(2, 5, 4, 0.3, seed=3)
        db, _ = make_catalog(records)
        config = AppConfig(storage=":memory:", console_dir=str(console))
        state = AppState(config, db, EmbeddingPool(records))
        static_client = TestClient(create_app(state))
        response = static_client.get("/console/")
        assert response.status_code == 200
        assert "console" in response.text
