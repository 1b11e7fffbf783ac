from __future__ import annotations

import json
import random
import threading
import time

import pytest
from fastapi.testclient import TestClient

from clam.backend import ScriptedBackend
from clam.pipeline import Policy
from clam.service import ServiceConfig, create_app

AMBIGUOUS = "On what date did he land on the moon?"
UNAMBIGUOUS = "On what date did Alan Bean land on the moon?"
CLARIFICATION = "Alan Bean"


@pytest.fixture
def client(fixture_backend):
    config = ServiceConfig(backend=fixture_backend, backend_name="scripted:fixture")
    return TestClient(create_app(config))


def create_session(client, policy=None):
    body = {} if policy is None else {"policy": policy}
    response = client.post("/sessions", json=body)
    assert response.status_code == 201
    return response.json()["session_id"]


def test_create_session(client):
    response = client.post("/sessions", json={})
    assert response.status_code == 201
    payload = response.json()
    assert payload["state"] == "awaiting_question"
    assert payload["session_id"]


def test_unknown_policy_rejected(client):
    response = client.post("/sessions", json={"policy": "galaxy_brain"})
    assert response.status_code == 400


def test_sessions_get_distinct_ids(client):
    assert create_session(client) != create_session(client)


def test_unconfigured_backend_is_503():
    config = ServiceConfig(backend=None)
    client = TestClient(create_app(config))
    assert client.post("/sessions", json={}).status_code == 503


def test_ambiguous_flow_walks_through_clarification(client):
    sid = create_session(client)
    view = client.post(f"/sessions/{sid}/messages", json={"text": AMBIGUOUS}).json()
    assert view["state"] == "awaiting_clarification"
    assert view["turns"][-1]["kind"] == "clarifying_question"
    assert view["turns"][-1]["text"] == "Who is he?"
    assert view["score"]["logprob_true"] > -0.3
    assert view["decision"] == "clarify"

    done = client.post(f"/sessions/{sid}/messages", json={"text": CLARIFICATION}).json()
    assert done["state"] == "done"
    assert [t["kind"] for t in done["turns"]] == [
        "initial_question",
        "clarifying_question",
        "clarification",
        "final_answer",
    ]
    assert "November 19, 1969" in done["final_answer"]


def test_unambiguous_flow_answers_directly(client):
    sid = create_session(client)
    view = client.post(f"/sessions/{sid}/messages", json={"text": UNAMBIGUOUS}).json()
    assert view["state"] == "done"
    assert [t["kind"] for t in view["turns"]] == ["initial_question", "direct_answer"]
    assert view["decision"] == "direct"
    assert view["score"]["logprob_true"] <= -0.3


def test_post_to_done_session_is_409(client):
    sid = create_session(client)
    client.post(f"/sessions/{sid}/messages", json={"text": UNAMBIGUOUS})
    response = client.post(f"/sessions/{sid}/messages", json={"text": "another"})
    assert response.status_code == 409


def test_empty_text_is_400(client):
    sid = create_session(client)
    assert client.post(f"/sessions/{sid}/messages", json={"text": "   "}).status_code == 400


def test_unknown_session_is_404(client):
    assert client.post("/sessions/nope/messages", json={"text": "hi"}).status_code == 404
    assert client.get("/sessions/nope").status_code == 404


def test_get_session_polling_views(client):
    sid = create_session(client)
    assert client.get(f"/sessions/{sid}").json()["turns"] == []
    client.post(f"/sessions/{sid}/messages", json={"text": AMBIGUOUS})
    view = client.get(f"/sessions/{sid}").json()
    assert len(view["turns"]) == 2
    assert view["turns"][0]["kind"] == "initial_question"


def test_healthz(client):
    assert client.get("/healthz").json() == {"status": "ok"}


def test_config_endpoint(client):
    payload = client.get("/config").json()
    assert payload["tau"] == -0.3
    assert payload["lambda"] == 0.8
    assert payload["backend"] == "scripted:fixture"
    assert len(payload["prompt_version_hash"]) == 64
    assert payload["default_policy"] == "clam"


def test_force_clarify_session_asks_even_on_precise_question(client):
    sid = create_session(client, policy=Policy.FORCE_CLARIFY.value)
    view = client.post(f"/sessions/{sid}/messages", json={"text": UNAMBIGUOUS}).json()
    assert view["state"] == "awaiting_clarification"
    done = client.post(f"/sessions/{sid}/messages", json={"text": CLARIFICATION}).json()
    assert done["state"] == "done"


def test_snapshot_on_done(fixture_backend, tmp_path):
    snapshot = tmp_path / "dialogues.jsonl"
    config = ServiceConfig(backend=fixture_backend, snapshot_path=snapshot)
    client = TestClient(create_app(config))
    sid = create_session(client)
    client.post(f"/sessions/{sid}/messages", json={"text": UNAMBIGUOUS})
    rows = [json.loads(line) for line in snapshot.read_text("utf-8").splitlines()]
    assert len(rows) == 1
    assert rows[0]["policy"] == "clam"
    assert rows[0]["asked_clarification"] is False


def test_live_timeout_aborts_session(fixture_backend):
    config = ServiceConfig(backend=fixture_backend, live_timeout=0.05)
    client = TestClient(create_app(config))
    sid = create_session(client)
    view = client.post(f"/sessions/{sid}/messages", json={"text": AMBIGUOUS}).json()
    assert view["state"] == "awaiting_clarification"
    deadline = time.monotonic() + 5
    while time.monotonic() < deadline:
        view = client.get(f"/sessions/{sid}").json()
        if view["state"] == "aborted":
            break
        time.sleep(0.01)
    assert view["state"] == "aborted"
    assert "no user clarification within" in view["error"]
    assert client.post(f"/sessions/{sid}/messages", json={"text": "late"}).status_code == 409


class SlowBackend:
    def __init__(self, inner, delay=0.05):
        self.inner = inner
        self.delay = delay

    def complete(self, request):
        time.sleep(self.delay)
        return self.inner.complete(request)


def test_concurrent_posts_exactly_one_wins(fixture_backend):
    config = ServiceConfig(backend=SlowBackend(fixture_backend))
    client = TestClient(create_app(config))
    sid = create_session(client)
    barrier = threading.Barrier(2)
    statuses = []

    def post():
        barrier.wait()
        response = client.post(f"/sessions/{sid}/messages", json={"text": UNAMBIGUOUS})
        statuses.append(response.status_code)

    threads = [threading.Thread(target=post) for _ in range(2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(statuses) == [200, 409]


LEGAL_TRANSITIONS = {
    ("awaiting_question", "awaiting_question"),
    ("awaiting_question", "classifying"),
    ("awaiting_question", "awaiting_clarification"),
    ("awaiting_question", "answering"),
    ("awaiting_question", "done"),
    ("awaiting_question", "aborted"),
    ("classifying", "classifying"),
    ("classifying", "awaiting_clarification"),
    ("classifying", "answering"),
    ("classifying", "done"),
    ("classifying", "aborted"),
    ("awaiting_clarification", "awaiting_clarification"),
    ("awaiting_clarification", "answering"),
    ("awaiting_clarification", "done"),
    ("awaiting_clarification", "aborted"),
    ("answering", "answering"),
    ("answering", "done"),
    ("answering", "aborted"),
    ("done", "done"),
    ("aborted", "aborted"),
}


def test_randomized_sequences_never_skip_states(client, sample_pairs):
    rng = random.Random(42)
    questions = [p.ambiguous_text for p in sample_pairs] + [
        p.unambiguous_text for p in sample_pairs
    ]
    sessions: dict[str, str] = {}

    def observe(sid, state):
        previous = sessions[sid]
        assert (previous, state) in LEGAL_TRANSITIONS, (previous, state)
        sessions[sid] = state

    for _ in range(120):
        action = rng.random()
        if not sessions or action < 0.2:
            sid = create_session(client)
            sessions[sid] = "awaiting_question"
            continue
        sid = rng.choice(list(sessions))
        if action < 0.6:
            text = rng.choice(questions + ["Alan Bean", ""])
            response = client.post(f"/sessions/{sid}/messages", json={"text": text})
            if response.status_code == 200:
                observe(sid, response.json()["state"])
        else:
            observe(sid, client.get(f"/sessions/{sid}").json()["state"])
