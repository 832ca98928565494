from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from chainprobe.humaneval import assign_annotators
from chainprobe.service import create_app

from test_humaneval import make_samples


@pytest.fixture
def client():
    return TestClient(create_app())


def session_payload(n_samples=3, annotators=4, per_chain=4, max_items=6, seed=5):
    samples = make_samples(n_samples)
    plan = assign_annotators(
        samples,
        [f"a{i}" for i in range(annotators)],
        per_chain,
        max_items_per_annotator=max_items,
        seed=seed,
    )
    chains = {}
    for sample in samples:
        for chain_id in (sample.maintained_chain_id, sample.violated_chain_id):
            chains[chain_id] = {
                "chain_id": chain_id,
                "events": [f"{chain_id} step {i}" for i in range(4)],
            }
    return {
        "samples": [s.to_dict() for s in samples],
        "plan": plan.to_dict(),
        "chains": chains,
    }


def create_session(client, payload=None):
    response = client.post("/sessions", json=payload or session_payload())
    assert response.status_code == 200, response.text
    return response.json()


def judge(client, session_id, annotator, chain_id, integrity=True, coherence=True):
    return client.post(
        f"/sessions/{session_id}/judgments",
        json={
            "annotator_id": annotator,
            "chain_id": chain_id,
            "integrity_judgment": integrity,
            "coherence_judgment": coherence,
        },
    )


def complete_annotator(client, session_id, annotator, integrity=True):
    """Judge every assigned item for one annotator; returns number of items."""
    items = 0
    while True:
        body = client.get(
            f"/sessions/{session_id}/next-item", params={"annotator": annotator}
        ).json()
        if body["done"]:
            return items
        for label in ("chain_a", "chain_b"):
            chain_id = body["item"][label]["chain_id"]
            response = judge(client, session_id, annotator, chain_id, integrity, integrity)
            assert response.status_code == 200
        items += 1


def test_cors_headers_for_browser_clients(client):
    created = create_session(client)
    response = client.get(
        f"/sessions/{created['session_id']}/next-item",
        params={"annotator": "a0"},
        headers={"Origin": "http://localhost:8080"},
    )
    assert response.headers.get("access-control-allow-origin") == "*"


class TestSessionLifecycle:
    def test_create_and_next_item(self, client):
        created = create_session(client)
        session_id = created["session_id"]
        assert created["annotators"] == ["a0", "a1", "a2", "a3"]
        body = client.get(
            f"/sessions/{session_id}/next-item", params={"annotator": "a0"}
        ).json()
        assert body["done"] is False
        assert body["progress"] == {"completed": 0, "total": 3}
        assert body["instructions"]["text"]
        assert len(body["instructions"]["examples"]) == 2
        assert {"chain_id", "events"} <= set(body["item"]["chain_a"])

    def test_ab_order_matches_plan(self, client):
        payload = session_payload()
        created = create_session(client, payload)
        session_id = created["session_id"]
        item = client.get(
            f"/sessions/{session_id}/next-item", params={"annotator": "a0"}
        ).json()["item"]
        plan_item = next(
            i for i in payload["plan"]["items"] if i["item_id"] == item["item_id"]
        )
        expected_a, expected_b = plan_item["ab_orders"]["a0"]
        assert item["chain_a"]["chain_id"] == expected_a
        assert item["chain_b"]["chain_id"] == expected_b

    def test_payloads_never_name_models(self, client):
        created = create_session(client)
        body = client.get(
            f"/sessions/{created['session_id']}/next-item", params={"annotator": "a0"}
        ).json()
        assert "model" not in str(body).lower()

    def test_unknown_session(self, client):
        response = client.get("/sessions/nope/next-item", params={"annotator": "a0"})
        assert response.status_code == 404
        assert response.json()["detail"]["error"] == "UnknownSession"


class TestJudgments:
    def test_progress_advances(self, client):
        created = create_session(client)
        session_id = created["session_id"]
        body = client.get(
            f"/sessions/{session_id}/next-item", params={"annotator": "a0"}
        ).json()
        first_item = body["item"]["item_id"]
        for label in ("chain_a", "chain_b"):
            assert judge(client, session_id, "a0", body["item"][label]["chain_id"]).status_code == 200
        after = client.get(
            f"/sessions/{session_id}/next-item", params={"annotator": "a0"}
        ).json()
        assert after["progress"]["completed"] == 1
        assert after["done"] or after["item"]["item_id"] != first_item

    def test_identical_resubmission_idempotent(self, client):
        created = create_session(client)
        session_id = created["session_id"]
        chain_id = client.get(
            f"/sessions/{session_id}/next-item", params={"annotator": "a0"}
        ).json()["item"]["chain_a"]["chain_id"]
        first = judge(client, session_id, "a0", chain_id, True, False)
        assert first.json()["status"] == "stored"
        again = judge(client, session_id, "a0", chain_id, True, False)
        assert again.status_code == 200
        assert again.json()["status"] == "duplicate"
        assert again.json()["record"] == first.json()["record"]

    def test_conflicting_resubmission_rejected(self, client):
        created = create_session(client)
        session_id = created["session_id"]
        chain_id = client.get(
            f"/sessions/{session_id}/next-item", params={"annotator": "a0"}
        ).json()["item"]["chain_a"]["chain_id"]
        judge(client, session_id, "a0", chain_id, True, False)
        conflict = judge(client, session_id, "a0", chain_id, False, False)
        assert conflict.status_code == 409
        assert conflict.json()["detail"]["error"] == "DuplicateSubmission"

    def test_not_assigned(self, client):
        created = create_session(client)
        response = judge(client, created["session_id"], "a0", "not-a-chain")
        assert response.status_code == 403
        assert response.json()["detail"]["error"] == "NotAssigned"

    def test_unknown_annotator(self, client):
        created = create_session(client)
        response = client.get(
            f"/sessions/{created['session_id']}/next-item", params={"annotator": "ghost"}
        )
        assert response.status_code == 403


class TestSurveyAndReport:
    def test_survey_requires_completion(self, client):
        created = create_session(client)
        response = client.post(
            f"/sessions/{created['session_id']}/survey",
            json={"annotator_id": "a0", "difficulty": 3, "can_construct_chain": True},
        )
        assert response.status_code == 409
        assert response.json()["detail"]["error"] == "SessionIncomplete"

    def test_survey_then_closed(self, client):
        created = create_session(client)
        session_id = created["session_id"]
        complete_annotator(client, session_id, "a0")
        response = client.post(
            f"/sessions/{session_id}/survey",
            json={
                "annotator_id": "a0",
                "difficulty": 3,
                "can_construct_chain": True,
                "comparison_note": "mine would be shorter",
            },
        )
        assert response.status_code == 200
        late = judge(client, session_id, "a0", "anything")
        assert late.status_code == 409
        assert late.json()["detail"]["error"] == "SessionClosed"

    def test_difficulty_validation(self, client):
        created = create_session(client)
        session_id = created["session_id"]
        complete_annotator(client, session_id, "a0")
        response = client.post(
            f"/sessions/{session_id}/survey",
            json={"annotator_id": "a0", "difficulty": 6, "can_construct_chain": True},
        )
        assert response.status_code == 422

    def test_report_incomplete_then_complete(self, client):
        created = create_session(client)
        session_id = created["session_id"]
        response = client.get(f"/sessions/{session_id}/report")
        assert response.status_code == 409
        assert response.json()["detail"]["error"] == "IncompleteJudgments"
        for annotator in created["annotators"]:
            complete_annotator(client, session_id, annotator, integrity=annotator in ("a0", "a1"))
        report = client.get(f"/sessions/{session_id}/report")
        assert report.status_code == 200
        body = report.json()
        assert body["agreement"]["integrity"]["n_raters_per_item"] == 4
        assert body["agreement"]["integrity_tallies"]["NoMajority"] == 6

    def test_csv_exports(self, client):
        created = create_session(client)
        session_id = created["session_id"]
        complete_annotator(client, session_id, "a0")
        client.post(
            f"/sessions/{session_id}/survey",
            json={"annotator_id": "a0", "difficulty": 2, "can_construct_chain": False},
        )
        annotations = client.get(f"/sessions/{session_id}/export/annotations.csv").text
        assert annotations.count("\n") == 7  # header + 6 records (3 items x 2 chains)
        surveys = client.get(f"/sessions/{session_id}/export/surveys.csv").text
        assert "a0,2,no" in surveys
