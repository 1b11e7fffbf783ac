"""The selective-clarification dialogue loop and its baseline policies.

One episode answers one question. The selective policy scores the question's
ambiguity and either answers directly or asks exactly one clarifying
question, collects the user's (or oracle's) clarification, and answers from
the whole dialogue. Baselines either always answer directly, always
clarify, or rely on an instruction in the prompt and a heuristic to notice
when the model chose to ask.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Optional, Sequence

from .backend import Backend, CompletionRequest
from .classifier import (
    AmbiguityScore,
    ClassifierConfig,
    Decision,
    ambiguity_score,
    classify,
)
from .oracle import ClarificationError, ClarificationSource
from .prompts import CLARIFY_INSTRUCTION, DatasetKind, render_answer, render_clarify

__all__ = [
    "Policy",
    "Role",
    "TurnKind",
    "DialogueTurn",
    "DialogueTranscript",
    "TranscriptError",
    "EpisodeError",
    "EpisodeHooks",
    "PipelineConfig",
    "run_episode",
    "detect_clarification_request",
    "transcript_to_obj",
    "transcript_from_obj",
]

# Stop sequences match the template separators and role tags.
DEFAULT_STOP_SEQUENCES = ("\n###", "\nUser:", "\nQ:")


class Policy(str, Enum):
    CLAM = "clam"
    DEFAULT_GPT = "default_gpt"
    PROMPTING_BASELINE = "prompting_baseline"
    FORCE_CLARIFY = "force_clarify"


class Role(str, Enum):
    USER = "user"
    ASSISTANT = "assistant"


class TurnKind(str, Enum):
    INITIAL_QUESTION = "initial_question"
    CLARIFYING_QUESTION = "clarifying_question"
    CLARIFICATION = "clarification"
    FINAL_ANSWER = "final_answer"
    DIRECT_ANSWER = "direct_answer"


_KIND_ROLE = {
    TurnKind.INITIAL_QUESTION: Role.USER,
    TurnKind.CLARIFICATION: Role.USER,
    TurnKind.CLARIFYING_QUESTION: Role.ASSISTANT,
    TurnKind.FINAL_ANSWER: Role.ASSISTANT,
    TurnKind.DIRECT_ANSWER: Role.ASSISTANT,
}

# The only two legal turn-kind sequences for a finished episode.
_DIRECT_SHAPE = (TurnKind.INITIAL_QUESTION, TurnKind.DIRECT_ANSWER)
_CLARIFY_SHAPE = (
    TurnKind.INITIAL_QUESTION,
    TurnKind.CLARIFYING_QUESTION,
    TurnKind.CLARIFICATION,
    TurnKind.FINAL_ANSWER,
)


class TranscriptError(ValueError):
    """A transcript violated the turn grammar or its flags."""


class EpisodeError(Exception):
    """An episode failed mid-flight; carries the partial transcript."""

    def __init__(self, message: str, partial_turns: Sequence["DialogueTurn"] = ()):
        super().__init__(message)
        self.partial_turns = tuple(partial_turns)


@dataclass(frozen=True)
class EpisodeHooks:
    """Optional observers fired as an episode progresses.

    ``on_turn`` sees every turn in order, ``on_score`` the ambiguity score
    when one is computed, and ``on_decision`` the chosen route ("direct" or
    "clarify"). The serving layer uses these to stream session state while
    an episode is still running.
    """

    on_turn: Optional[Callable[["DialogueTurn"], None]] = None
    on_score: Optional[Callable[[AmbiguityScore], None]] = None
    on_decision: Optional[Callable[[str], None]] = None

    def turn(self, turn: "DialogueTurn") -> "DialogueTurn":
        if self.on_turn:
            self.on_turn(turn)
        return turn

    def score(self, score: AmbiguityScore) -> AmbiguityScore:
        if self.on_score:
            self.on_score(score)
        return score

    def decision(self, route: str) -> None:
        if self.on_decision:
            self.on_decision(route)


@dataclass(frozen=True)
class DialogueTurn:
    role: Role
    kind: TurnKind
    text: str

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise TranscriptError(f"{self.kind.value} turn must have non-empty text")
        if _KIND_ROLE[self.kind] is not self.role:
            raise TranscriptError(
                f"turn kind {self.kind.value} requires role {_KIND_ROLE[self.kind].value}"
            )


def make_turn(kind: TurnKind, text: str) -> DialogueTurn:
    return DialogueTurn(role=_KIND_ROLE[kind], kind=kind, text=text)


@dataclass(frozen=True)
class DialogueTranscript:
    """A completed episode: ordered turns plus routing metadata."""

    question_id: str
    policy: Policy
    turns: tuple[DialogueTurn, ...]
    asked_clarification: bool
    final_answer_text: str
    ambiguity_score: Optional[AmbiguityScore] = None

    def __post_init__(self):
        kinds = tuple(t.kind for t in self.turns)
        if kinds not in (_DIRECT_SHAPE, _CLARIFY_SHAPE):
            raise TranscriptError(f"illegal turn-kind sequence {[k.value for k in kinds]}")
        has_clarifying = TurnKind.CLARIFYING_QUESTION in kinds
        if self.asked_clarification != has_clarifying:
            raise TranscriptError(
                "asked_clarification flag disagrees with the turns"
            )
        if self.final_answer_text != self.turns[-1].text:
            raise TranscriptError("final_answer_text must equal the last turn's text")


@dataclass(frozen=True)
class PipelineConfig:
    """Sampling and routing knobs for one episode.

    Generation runs at temperature 0 with short answer budgets, matching the
    short-answer trivia style; detection requests a single token.
    """

    dataset: DatasetKind = DatasetKind.AMBIG_TRIVIA
    classifier: Optional[ClassifierConfig] = None
    answer_max_tokens: int = 64
    stop_sequences: tuple[str, ...] = DEFAULT_STOP_SEQUENCES

    def __post_init__(self):
        if self.classifier is None:
            object.__setattr__(self, "classifier", ClassifierConfig(dataset=self.dataset))
        elif self.classifier.dataset is not self.dataset:
            object.__setattr__(
                self, "classifier", replace(self.classifier, dataset=self.dataset)
            )


_INTERROGATIVE_CUES = (
    "who ",
    "what ",
    "which ",
    "when ",
    "where ",
    "do you",
    "are you",
    "could you",
)


def detect_clarification_request(response_text: str) -> bool:
    """Heuristic: does a free-form response ask the user something?

    True iff the trimmed response ends with "?" or starts with an
    interrogative cue, case-insensitively. Used to score policies whose only
    clarification signal is the shape of their reply.
    """
    trimmed = response_text.strip()
    if not trimmed:
        return False
    if trimmed.endswith("?"):
        return True
    return trimmed.lower().startswith(_INTERROGATIVE_CUES)


def _generate(backend: Backend, prompt: str, config: PipelineConfig) -> str:
    completion = backend.complete(
        CompletionRequest(
            prompt=prompt,
            max_tokens=config.answer_max_tokens,
            temperature=0.0,
            stop_sequences=config.stop_sequences,
        )
    )
    return completion.text.strip()


def _first_line(text: str) -> str:
    for line in text.splitlines():
        if line.strip():
            return line.strip()
    return text


def _answer_prompt(turns: Sequence[DialogueTurn], instruction: Optional[str], dataset) -> str:
    return render_answer(
        [(t.role.value, t.text) for t in turns], instruction=instruction, dataset=dataset
    ).text


def run_episode(
    question: str,
    *,
    policy: Policy,
    backend: Backend,
    clarifier: Optional[ClarificationSource] = None,
    config: Optional[PipelineConfig] = None,
    context=None,
    question_id: str = "",
    hooks: Optional[EpisodeHooks] = None,
) -> DialogueTranscript:
    """Run one question through one policy and return the full transcript.

    Policies that may clarify need a ClarificationSource; its failures are
    re-raised as EpisodeError with the partial transcript attached. Backend
    errors propagate unchanged.
    """
    config = config or PipelineConfig()
    policy = Policy(policy)
    hooks = hooks or EpisodeHooks()
    if policy is not Policy.DEFAULT_GPT and clarifier is None:
        raise ValueError(f"policy {policy.value} may clarify and needs a clarifier")

    turns: list[DialogueTurn] = [hooks.turn(make_turn(TurnKind.INITIAL_QUESTION, question))]
    score: Optional[AmbiguityScore] = None

    if policy is Policy.DEFAULT_GPT:
        hooks.decision("direct")
        answer = _generate(backend, _answer_prompt(turns, None, config.dataset), config)
        turns.append(hooks.turn(make_turn(TurnKind.DIRECT_ANSWER, answer)))
        return _finish(question_id, policy, turns, score)

    if policy is Policy.PROMPTING_BASELINE:
        first = _generate(
            backend, _answer_prompt(turns, CLARIFY_INSTRUCTION, config.dataset), config
        )
        if detect_clarification_request(first):
            hooks.decision("clarify")
            turns.append(hooks.turn(make_turn(TurnKind.CLARIFYING_QUESTION, first)))
            turns.append(
                hooks.turn(
                    make_turn(TurnKind.CLARIFICATION, _clarify_from(clarifier, first, question, turns))
                )
            )
            answer = _generate(
                backend, _answer_prompt(turns, CLARIFY_INSTRUCTION, config.dataset), config
            )
            turns.append(hooks.turn(make_turn(TurnKind.FINAL_ANSWER, answer)))
        else:
            hooks.decision("direct")
            turns.append(hooks.turn(make_turn(TurnKind.DIRECT_ANSWER, first)))
        return _finish(question_id, policy, turns, score)

    if policy is Policy.CLAM:
        score = hooks.score(
            ambiguity_score(
                question, backend, config.classifier, context=context, question_id=question_id or None
            )
        )
        if classify(score, config.classifier) is Decision.UNAMBIGUOUS:
            hooks.decision("direct")
            answer = _generate(backend, _answer_prompt(turns, None, config.dataset), config)
            turns.append(hooks.turn(make_turn(TurnKind.DIRECT_ANSWER, answer)))
            return _finish(question_id, policy, turns, score)
        # fall through to the clarification path with the score attached

    # Clarification path (selective policy on an ambiguous question, or
    # forced clarification regardless of ambiguity).
    hooks.decision("clarify")
    clarify_prompt = render_clarify(question, config.dataset, context=context)
    clarifying_question = _first_line(_generate(backend, clarify_prompt.text, config))
    turns.append(hooks.turn(make_turn(TurnKind.CLARIFYING_QUESTION, clarifying_question)))
    clarification = _clarify_from(clarifier, clarifying_question, question, turns)
    turns.append(hooks.turn(make_turn(TurnKind.CLARIFICATION, clarification)))
    answer = _generate(backend, _answer_prompt(turns, None, config.dataset), config)
    turns.append(hooks.turn(make_turn(TurnKind.FINAL_ANSWER, answer)))
    return _finish(question_id, policy, turns, score)


def _clarify_from(
    clarifier: ClarificationSource,
    clarifying_question: str,
    question: str,
    partial: Sequence[DialogueTurn],
) -> str:
    try:
        return clarifier.provide_clarification(clarifying_question, question)
    except ClarificationError as exc:
        raise EpisodeError(str(exc), partial_turns=partial) from exc


def _finish(
    question_id: str,
    policy: Policy,
    turns: Sequence[DialogueTurn],
    score: Optional[AmbiguityScore],
) -> DialogueTranscript:
    return DialogueTranscript(
        question_id=question_id,
        policy=policy,
        turns=tuple(turns),
        asked_clarification=any(t.kind is TurnKind.CLARIFYING_QUESTION for t in turns),
        final_answer_text=turns[-1].text,
        ambiguity_score=score,
    )


def transcript_to_obj(t: DialogueTranscript, timestamp: Optional[str] = None) -> dict:
    """JSON-serializable form of a transcript (one JSONL line per episode)."""
    obj = {
        "question_id": t.question_id,
        "policy": t.policy.value,
        "turns": [{"role": u.role.value, "kind": u.kind.value, "text": u.text} for u in t.turns],
        "score": None
        if t.ambiguity_score is None
        else {
            "logprob_true": t.ambiguity_score.logprob_true,
            "matched_variant": t.ambiguity_score.matched_variant,
        },
        "asked_clarification": t.asked_clarification,
        "final_answer": t.final_answer_text,
    }
    if timestamp is not None:
        obj["timestamp"] = timestamp
    return obj


def transcript_from_obj(obj: dict) -> DialogueTranscript:
    score = None
    if obj.get("score") is not None:
        score = AmbiguityScore(
            logprob_true=obj["score"]["logprob_true"],
            matched_variant=obj["score"]["matched_variant"],
            question_id=obj["question_id"] or None,
        )
    return DialogueTranscript(
        question_id=obj["question_id"],
        policy=Policy(obj["policy"]),
        turns=tuple(
            DialogueTurn(role=Role(u["role"]), kind=TurnKind(u["kind"]), text=u["text"])
            for u in obj["turns"]
        ),
        asked_clarification=obj["asked_clarification"],
        final_answer_text=obj["final_answer"],
        ambiguity_score=score,
    )
