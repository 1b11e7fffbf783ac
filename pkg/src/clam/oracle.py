"""Clarification sources: the simulated user and the live-session bridge.

During automatic evaluation a language model stands in for the human: it is
given privileged access to the unambiguous twin of the question (or to the
intended-entity label for entity corpora) and answers the clarifying
question from that. In interactive use, a live session supplies the user's
actual reply instead.
"""

from __future__ import annotations

import queue
import threading
from typing import Optional, Protocol, Sequence

from .backend import Backend, CompletionRequest
from .corpus import LabeledQuestion, QuestionPair
from .metrics import NormalizationConfig, normalize_answer
from .prompts import EntityPairContext, MultiTurnContext, render_oracle

__all__ = [
    "ClarificationSource",
    "ClarificationError",
    "ClarificationTimeout",
    "OracleLeakageError",
    "OracleSource",
    "LiveSource",
]

DEFAULT_LIVE_TIMEOUT = 600.0

_RETRY_SUFFIX = " Do not answer the original question."


class ClarificationError(Exception):
    """A clarification source failed to produce a user turn."""


class ClarificationTimeout(ClarificationError):
    """A live session did not supply a user turn within the timeout."""


class OracleLeakageError(ClarificationError):
    """The oracle kept leaking a reference answer after the guarded retry."""


class ClarificationSource(Protocol):
    def provide_clarification(self, clarifying_question: str, ambiguous_question: str) -> str: ...


class OracleSource:
    """Simulated user: answers clarifying questions from privileged text.

    The privileged text is the unambiguous question for paired corpora, or
    the dataset's intended-entity label for entity corpora; it is never the
    reference answer. A lexical guard rejects outputs containing a reference
    answer and retries once with an instruction not to answer the original
    question; a second leak raises, so oracle failures surface instead of
    silently contaminating transcripts.
    """

    def __init__(
        self,
        backend: Backend,
        privileged_text: str,
        reference_answers: Sequence[str] = (),
        max_tokens: int = 32,
    ):
        if not privileged_text or not privileged_text.strip():
            raise ValueError("oracle requires non-empty privileged text")
        self._backend = backend
        self._privileged = privileged_text
        self._references = tuple(reference_answers)
        self._max_tokens = max_tokens

    @classmethod
    def from_pair(cls, backend: Backend, pair: QuestionPair, **kwargs) -> "OracleSource":
        return cls(backend, pair.unambiguous_text, pair.reference_answers, **kwargs)

    @classmethod
    def from_labeled(cls, backend: Backend, item: LabeledQuestion, **kwargs) -> "OracleSource":
        context = item.context
        if isinstance(context, EntityPairContext):
            if not context.intended_entity:
                raise ValueError(f"{item.id}: no intended-entity label for the oracle")
            privileged = f"The user means the following entity: {context.intended_entity}"
        elif isinstance(context, MultiTurnContext):
            if not context.intended_entity:
                raise ValueError(f"{item.id}: no intended-entity label for the oracle")
            turns = " / ".join(context.prior_turns)
            privileged = (
                f"Earlier conversation: {turns}. "
                f"The user means the following entity: {context.intended_entity}"
            )
        else:
            raise ValueError(f"{item.id}: no privileged context available")
        return cls(backend, privileged, item.reference_answers, **kwargs)

    def provide_clarification(self, clarifying_question: str, ambiguous_question: str) -> str:
        if not clarifying_question or not clarifying_question.strip():
            raise ClarificationError("clarifying question must be non-empty")
        prompt = render_oracle(clarifying_question, self._privileged, ambiguous_question)
        text = self._complete(prompt.text)
        if self._leaks_reference(text):
            text = self._complete(prompt.text + _RETRY_SUFFIX)
            if self._leaks_reference(text):
                raise OracleLeakageError(
                    f"oracle output contains a reference answer: {text!r}"
                )
        return text

    def _complete(self, prompt: str) -> str:
        completion = self._backend.complete(
            CompletionRequest(
                prompt=prompt,
                max_tokens=self._max_tokens,
                temperature=0.0,
                stop_sequences=("\n",),
            )
        )
        # Clarifications are short phrases; the first line keeps the oracle
        # from answering the original question outright.
        lines = [ln for ln in completion.text.strip().splitlines() if ln.strip()]
        if not lines:
            raise ClarificationError("oracle produced an empty clarification")
        return lines[0].strip()

    def _leaks_reference(self, text: str) -> bool:
        norm = NormalizationConfig()
        candidate = normalize_answer(text, norm)
        return any(
            normalize_answer(ref, norm) in candidate for ref in self._references
        )


class LiveSource:
    """Blocks the episode until a live session supplies the user's turn.

    ``waiting`` is set while a consumer is blocked in
    ``provide_clarification``, letting the serving layer distinguish "episode
    needs the user" from "episode still computing".
    """

    def __init__(self, timeout: float = DEFAULT_LIVE_TIMEOUT):
        self.timeout = timeout
        self.waiting = threading.Event()
        self._queue: "queue.Queue[str]" = queue.Queue()
        self.last_clarifying_question: Optional[str] = None

    def provide_clarification(self, clarifying_question: str, ambiguous_question: str) -> str:
        self.last_clarifying_question = clarifying_question
        self.waiting.set()
        try:
            return self._queue.get(timeout=self.timeout)
        except queue.Empty:
            raise ClarificationTimeout(
                f"no user clarification within {self.timeout:.0f}s"
            ) from None
        finally:
            self.waiting.clear()

    def supply(self, text: str) -> None:
        """Hand the user's reply to the blocked episode, verbatim."""
        self._queue.put(text)
