"""HTTP session API for interactive clarification dialogues.

A session walks one question through the selective-clarification loop with a
live human as the clarification source: the user posts the question, the
service classifies and either answers or emits the clarifying question, the
user posts the clarification, and the service answers from the whole
dialogue. Sessions live in memory; finished ones can be snapshotted to the
runner's transcript format so live dialogues become evaluation data.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .backend import Backend
from .classifier import AmbiguityScore, ClassifierConfig, Decision
from .oracle import LiveSource
from .pipeline import (
    DialogueTranscript,
    DialogueTurn,
    EpisodeHooks,
    PipelineConfig,
    Policy,
    run_episode,
    transcript_to_obj,
)
from .prompts import DatasetKind, prompt_version_hash

__all__ = ["ServiceConfig", "Session", "SessionStore", "create_app"]

# How long a message handler waits for the episode to settle before handing
# the in-flight state back to the client to poll.
DEFAULT_STEP_WAIT = 30.0


@dataclass
class ServiceConfig:
    backend: Optional[Backend]
    dataset: DatasetKind = DatasetKind.AMBIG_TRIVIA
    tau: float = ClassifierConfig().tau
    penalty_lambda: float = 0.8
    backend_name: str = "unconfigured"
    default_policy: Policy = Policy.CLAM
    live_timeout: float = 600.0
    step_wait: float = DEFAULT_STEP_WAIT
    snapshot_path: Optional[Path] = None
    allow_origins: tuple[str, ...] = ("*",)

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            dataset=self.dataset,
            classifier=ClassifierConfig(tau=self.tau, dataset=self.dataset),
        )


class Session:
    """One dialogue's state machine.

    States move awaiting_question -> classifying -> (answering -> done |
    awaiting_clarification -> answering -> done); no turn is appended after
    done/aborted. Mutations are serialized per session: a request must win
    ``request_lock`` or be rejected, so concurrent posts cannot tear the
    transcript.
    """

    def __init__(self, policy: Policy, live_timeout: float):
        self.session_id = uuid.uuid4().hex
        self.policy = policy
        self.state = "awaiting_question"
        self.turns: list[DialogueTurn] = []
        self.score: Optional[AmbiguityScore] = None
        self.decision: Optional[str] = None
        self.error: Optional[str] = None
        self.created_at = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        self.transcript: Optional[DialogueTranscript] = None
        self.live_source = LiveSource(timeout=live_timeout)
        self.request_lock = threading.Lock()
        self._state_lock = threading.Lock()
        self._thread: Optional[threading.Thread] = None

    # -- episode-side hooks ------------------------------------------------

    def _on_turn(self, turn: DialogueTurn) -> None:
        with self._state_lock:
            self.turns.append(turn)
            if turn.kind.value == "clarifying_question":
                self.state = "awaiting_clarification"
            elif turn.kind.value == "clarification":
                self.state = "answering"

    def _on_score(self, score: AmbiguityScore) -> None:
        with self._state_lock:
            self.score = score

    def _on_decision(self, route: str) -> None:
        with self._state_lock:
            self.decision = route
            if route == "direct":
                self.state = "answering"

    def hooks(self) -> EpisodeHooks:
        return EpisodeHooks(
            on_turn=self._on_turn, on_score=self._on_score, on_decision=self._on_decision
        )

    # -- service-side transitions -------------------------------------------

    def start_episode(self, question: str, config: ServiceConfig) -> None:
        with self._state_lock:
            self.state = "classifying"

        def work() -> None:
            try:
                transcript = run_episode(
                    question,
                    policy=self.policy,
                    backend=config.backend,
                    clarifier=self.live_source,
                    config=config.pipeline_config(),
                    question_id=self.session_id,
                    hooks=self.hooks(),
                )
            except Exception as exc:  # surfaced to the client, session dead
                with self._state_lock:
                    self.error = f"{type(exc).__name__}: {exc}"
                    self.state = "aborted"
                return
            with self._state_lock:
                self.transcript = transcript
                self.state = "done"
            _snapshot(transcript, config)

        self._thread = threading.Thread(target=work, daemon=True)
        self._thread.start()

    def settle(self, step_wait: float, stop_on_waiting: bool = True) -> None:
        """Wait until the episode finishes or blocks on the user, or until
        ``step_wait`` elapses (the client then polls).

        ``stop_on_waiting`` is False right after a clarification was
        supplied: the waiting flag may not have cleared yet, and the only
        remaining block point is behind us.
        """
        deadline = time.monotonic() + step_wait
        while time.monotonic() < deadline:
            if self._thread is None or not self._thread.is_alive():
                return
            if stop_on_waiting and self.live_source.waiting.is_set():
                return
            time.sleep(0.002)

    def view(self) -> dict:
        with self._state_lock:
            return {
                "session_id": self.session_id,
                "policy": self.policy.value,
                "state": self.state,
                "turns": [
                    {"role": t.role.value, "kind": t.kind.value, "text": t.text}
                    for t in self.turns
                ],
                "score": None
                if self.score is None
                else {
                    "logprob_true": self.score.logprob_true,
                    "matched_variant": self.score.matched_variant,
                },
                "decision": self.decision,
                "final_answer": self.turns[-1].text
                if self.turns and self.turns[-1].kind.value in ("direct_answer", "final_answer")
                else None,
                "error": self.error,
                "created_at": self.created_at,
            }


def _snapshot(transcript: DialogueTranscript, config: ServiceConfig) -> None:
    if config.snapshot_path is None:
        return
    with open(config.snapshot_path, "a", encoding="utf-8") as sink:
        sink.write(json.dumps(transcript_to_obj(transcript), ensure_ascii=False) + "\n")


class SessionStore:
    def __init__(self):
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, policy: Policy, live_timeout: float) -> Session:
        session = Session(policy, live_timeout)
        with self._lock:
            self._sessions[session.session_id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return session


class CreateSessionBody(BaseModel):
    policy: Optional[str] = None


class MessageBody(BaseModel):
    text: str


def create_app(config: ServiceConfig) -> FastAPI:
    """Build the session-serving app over one configured backend."""
    app = FastAPI(title="clam service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(config.allow_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = SessionStore()
    app.state.store = store
    app.state.config = config

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/config")
    def get_config():
        return {
            "tau": config.tau,
            "lambda": config.penalty_lambda,
            "backend": config.backend_name,
            "prompt_version_hash": prompt_version_hash(),
            "default_policy": config.default_policy.value,
        }

    @app.post("/sessions", status_code=201)
    def create_session(body: Optional[CreateSessionBody] = None):
        if config.backend is None:
            raise HTTPException(status_code=503, detail="no backend configured")
        policy = config.default_policy
        if body is not None and body.policy is not None:
            try:
                policy = Policy(body.policy)
            except ValueError:
                raise HTTPException(status_code=400, detail=f"unknown policy {body.policy!r}")
        session = store.create(policy, config.live_timeout)
        return {"session_id": session.session_id, "state": session.state}

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody):
        session = store.get(session_id)
        text = body.text.strip()
        if not text:
            raise HTTPException(status_code=400, detail="empty message")
        if not session.request_lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="session is busy")
        try:
            state = session.state
            if state == "awaiting_question":
                session.start_episode(text, config)
                session.settle(config.step_wait, stop_on_waiting=True)
            elif state == "awaiting_clarification":
                session.live_source.supply(text)
                session.settle(config.step_wait, stop_on_waiting=False)
            else:
                raise HTTPException(
                    status_code=409, detail=f"cannot post a message in state {state!r}"
                )
            return session.view()
        finally:
            session.request_lock.release()

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return store.get(session_id).view()

    return app
