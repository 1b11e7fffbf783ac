"""Prompt templates and rendering for every step of the clarification dialogue.

Templates live as UTF-8 resource files under ``prompts/templates`` (one file
per dataset and step) and are rendered by simple placeholder substitution.
Rendered outputs for fixed inputs are frozen byte-for-byte under
``prompts/golden`` and pinned by the test suite.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Optional, Sequence

__all__ = [
    "DatasetKind",
    "PromptStep",
    "PromptText",
    "EntityPairContext",
    "MultiTurnContext",
    "PromptError",
    "UnsupportedStepError",
    "QA_PREAMBLE",
    "CLARIFY_INSTRUCTION",
    "render_detect",
    "render_clarify",
    "render_answer",
    "render_oracle",
    "detect_cue",
    "prompt_version_hash",
]

QA_PREAMBLE = "This is a conversation between a user and a question-answering bot."

# Instruction sentence appended to the preamble by the prompting baseline.
CLARIFY_INSTRUCTION = (
    "The bot asks the user for clarification if the user's question is"
    " ambiguous or imprecise."
)


class DatasetKind(str, Enum):
    """The four question corpora the framework understands."""

    AMBIG_TRIVIA = "ambig_trivia"
    CLARIQ = "clariq"
    CLAQUA_SINGLE = "claqua_single"
    CLAQUA_MULTI = "claqua_multi"


class PromptStep(str, Enum):
    DETECT = "detect"
    CLARIFY = "clarify"
    ANSWER = "answer"
    ORACLE = "oracle"


class PromptError(ValueError):
    """Raised when a prompt cannot be rendered from the given inputs."""


class UnsupportedStepError(PromptError):
    """Raised when a dataset does not support the requested dialogue step."""


@dataclass(frozen=True)
class PromptText:
    """A fully rendered prompt, tagged with its step and source dataset."""

    text: str
    step: PromptStep
    dataset: Optional[DatasetKind] = None


@dataclass(frozen=True)
class EntityPairContext:
    """Two same-named entities a single-turn question may refer to."""

    entity_name: str
    entity1_description: str
    entity2_description: str
    intended_entity: Optional[str] = None


@dataclass(frozen=True)
class MultiTurnContext:
    """Prior conversation plus the two referents the last turn may point at.

    ``prior_turns`` alternate user/bot starting with the user; the final
    question itself is not part of ``prior_turns``.
    """

    context1: str
    context2: str
    entity1_name: str
    entity2_name: str
    prior_turns: Sequence[str] = field(default_factory=tuple)
    intended_entity: Optional[str] = None


_TEMPLATE_FILES = {
    (DatasetKind.AMBIG_TRIVIA, PromptStep.DETECT): "ambig_trivia_detect.txt",
    (DatasetKind.AMBIG_TRIVIA, PromptStep.CLARIFY): "ambig_trivia_clarify.txt",
    (DatasetKind.CLARIQ, PromptStep.DETECT): "clariq_detect.txt",
    (DatasetKind.CLAQUA_SINGLE, PromptStep.DETECT): "claqua_single_detect.txt",
    (DatasetKind.CLAQUA_SINGLE, PromptStep.CLARIFY): "claqua_single_clarify.txt",
    (DatasetKind.CLAQUA_MULTI, PromptStep.DETECT): "claqua_multi_detect.txt",
    (DatasetKind.CLAQUA_MULTI, PromptStep.CLARIFY): "claqua_multi_clarify.txt",
    (None, PromptStep.ANSWER): "answer_transcript.txt",
    (None, PromptStep.ORACLE): "oracle_clarification.txt",
}

_ROLE_LABELS = {"user": "User", "assistant": "Bot"}


def _load_template(name: str) -> str:
    return resources.files("clam.prompts").joinpath("templates", name).read_text("utf-8")


def _fill(template: str, **slots: str) -> str:
    # Plain replacement, not str.format: question text may contain braces.
    out = template
    for key, value in slots.items():
        out = out.replace("{" + key + "}", value)
    return out


def _require_nonempty(value: str, what: str) -> None:
    if not value or not value.strip():
        raise PromptError(f"{what} must be non-empty")


def detect_cue(dataset: DatasetKind, question: str, context=None) -> str:
    """The exact final-slot text a rendered detection prompt must end with."""
    if dataset in (DatasetKind.AMBIG_TRIVIA,):
        return f"Q: {question}\nThis question is ambiguous:"
    if dataset is DatasetKind.CLARIQ:
        return f"Question: {question}\nThis question is ambiguous:"
    if dataset is DatasetKind.CLAQUA_SINGLE:
        return f'"{question}" could refer to both entities "{context.entity_name}":'
    return (
        f'"{question}" could refer both to {context.entity1_name}'
        f" and {context.entity2_name}:"
    )


def render_detect(question: str, dataset: DatasetKind, context=None) -> PromptText:
    """Render the few-shot ambiguity-detection prompt for ``question``.

    The returned prompt ends with the dataset's detection cue and no trailing
    whitespace; the model's next token ("True"/"False" variants) carries the
    ambiguity signal.
    """
    _require_nonempty(question, "question")
    if dataset in (DatasetKind.AMBIG_TRIVIA, DatasetKind.CLARIQ):
        text = _fill(_load_template(_TEMPLATE_FILES[(dataset, PromptStep.DETECT)]), question=question)
    elif dataset is DatasetKind.CLAQUA_SINGLE:
        if not isinstance(context, EntityPairContext):
            raise PromptError("claqua_single detection requires an EntityPairContext")
        text = _fill(
            _load_template(_TEMPLATE_FILES[(dataset, PromptStep.DETECT)]),
            entity1_name=context.entity_name,
            entity1_description=context.entity1_description,
            entity2_name=context.entity_name,
            entity2_description=context.entity2_description,
            question=question,
            entity_name=context.entity_name,
        )
    elif dataset is DatasetKind.CLAQUA_MULTI:
        if not isinstance(context, MultiTurnContext):
            raise PromptError("claqua_multi detection requires a MultiTurnContext")
        text = _fill(
            _load_template(_TEMPLATE_FILES[(dataset, PromptStep.DETECT)]),
            context1=context.context1,
            context2=context.context2,
            dialogue=_tagged_dialogue(context.prior_turns, question),
            question=question,
            entity1_name=context.entity1_name,
            entity2_name=context.entity2_name,
        )
    else:  # pragma: no cover - enum is exhaustive
        raise PromptError(f"unknown dataset {dataset}")
    return PromptText(text=text, step=PromptStep.DETECT, dataset=dataset)


def render_clarify(question: str, dataset: DatasetKind, context=None) -> PromptText:
    """Render the prompt that elicits a clarifying question about ``question``."""
    _require_nonempty(question, "question")
    if dataset is DatasetKind.CLARIQ:
        raise UnsupportedStepError("clariq supports ambiguity detection only")
    if dataset is DatasetKind.AMBIG_TRIVIA:
        text = _fill(_load_template(_TEMPLATE_FILES[(dataset, PromptStep.CLARIFY)]), question=question)
    elif dataset is DatasetKind.CLAQUA_SINGLE:
        text = _fill(_load_template(_TEMPLATE_FILES[(dataset, PromptStep.CLARIFY)]), question=question)
    else:
        prior = context.prior_turns if isinstance(context, MultiTurnContext) else ()
        dialogue = "\n".join([f"{turn} <EOS>" for turn in prior] + [question])
        text = _fill(
            _load_template(_TEMPLATE_FILES[(DatasetKind.CLAQUA_MULTI, PromptStep.CLARIFY)]),
            dialogue=dialogue,
        )
    return PromptText(text=text, step=PromptStep.CLARIFY, dataset=dataset)


def _tagged_dialogue(prior_turns: Sequence[str], question: str) -> str:
    lines = []
    for i, turn in enumerate(prior_turns):
        label = "User" if i % 2 == 0 else "Bot"
        lines.append(f"{label}: {turn}")
    lines.append(f"User: {question}")
    return "\n".join(lines)


def render_answer(
    dialogue: Sequence[tuple[str, str]],
    instruction: Optional[str] = None,
    dataset: Optional[DatasetKind] = None,
) -> PromptText:
    """Render the conversation transcript that cues the bot's answer.

    ``dialogue`` is an ordered list of ``(role, text)`` pairs with role
    ``"user"`` or ``"assistant"``. An optional ``instruction`` sentence is
    appended to the preamble line (used by the prompting baseline).
    """
    if not dialogue:
        raise PromptError("dialogue must contain at least the initial question")
    lines = []
    for role, text in dialogue:
        if role not in _ROLE_LABELS:
            raise PromptError(f"unknown dialogue role {role!r}")
        _require_nonempty(text, "dialogue turn")
        lines.append(f"{_ROLE_LABELS[role]}: {text}")
    suffix = f" {instruction}" if instruction else ""
    text = _fill(
        _load_template(_TEMPLATE_FILES[(None, PromptStep.ANSWER)]),
        preamble=QA_PREAMBLE + suffix,
        dialogue="\n".join(lines),
    )
    return PromptText(text=text, step=PromptStep.ANSWER, dataset=dataset)


def render_oracle(
    clarifying_question: str,
    privileged_question: str,
    ambiguous_question: str,
) -> PromptText:
    """Render the prompt through which a model with privileged knowledge of the
    intended question supplies the clarification a user would give."""
    _require_nonempty(clarifying_question, "clarifying question")
    _require_nonempty(privileged_question, "privileged question")
    _require_nonempty(ambiguous_question, "ambiguous question")
    text = _fill(
        _load_template(_TEMPLATE_FILES[(None, PromptStep.ORACLE)]),
        ambiguous_question=ambiguous_question,
        privileged_question=privileged_question,
        clarifying_question=clarifying_question,
    )
    return PromptText(text=text, step=PromptStep.ORACLE, dataset=None)


def prompt_version_hash() -> str:
    """SHA-256 over all template files, identifying the prompt set in configs."""
    digest = hashlib.sha256()
    root = resources.files("clam.prompts").joinpath("templates")
    for name in sorted(_TEMPLATE_FILES.values()):
        digest.update(name.encode("utf-8"))
        digest.update(root.joinpath(name).read_bytes())
    return digest.hexdigest()
