"""Continuous ambiguity scoring and threshold classification.

The score of a question is the natural-log probability that the model's next
token after the few-shot detection prompt is an affirmative variant
("True"). Scores above the decision threshold tau route the dialogue to a
clarifying question.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .backend import Backend, CompletionRequest
from .prompts import DatasetKind, render_detect

__all__ = [
    "DEFAULT_TAU",
    "DEFAULT_AFFIRMATIVE_VARIANTS",
    "AmbiguityScore",
    "ClassifierConfig",
    "Decision",
    "ScoreUnavailableError",
    "ambiguity_score",
    "classify",
]

# Threshold tuned on a holdout of ambiguous and unambiguous questions.
DEFAULT_TAU = -0.3

# Tokenizers differ on leading spaces; try the spaced variant first.
DEFAULT_AFFIRMATIVE_VARIANTS = (" True", "True")


class Decision(str, Enum):
    AMBIGUOUS = "ambiguous"
    UNAMBIGUOUS = "unambiguous"


class ScoreUnavailableError(Exception):
    """No affirmative variant appeared among the top-k next-token candidates."""


@dataclass(frozen=True)
class AmbiguityScore:
    """Log-probability of the affirmative next token for one question."""

    logprob_true: float
    matched_variant: str
    question_id: Optional[str] = None

    def __post_init__(self):
        if self.logprob_true > 0:
            raise ValueError("logprob_true must be <= 0")


@dataclass(frozen=True)
class ClassifierConfig:
    tau: float = DEFAULT_TAU
    affirmative_variants: tuple[str, ...] = DEFAULT_AFFIRMATIVE_VARIANTS
    dataset: DatasetKind = DatasetKind.AMBIG_TRIVIA
    logprob_top_k: int = 5

    def __post_init__(self):
        if not self.affirmative_variants:
            raise ValueError("affirmative_variants must be non-empty")


def ambiguity_score(
    question: str,
    backend: Backend,
    config: ClassifierConfig,
    context=None,
    question_id: Optional[str] = None,
) -> AmbiguityScore:
    """Score one question by the logprob of the affirmative next token.

    Renders the detection prompt for ``config.dataset``, requests a single
    token with top-k candidates, and returns the logprob of the first
    configured affirmative variant found among the candidates. Raises
    ScoreUnavailableError when no variant appears; a missing variant is never
    silently replaced by a default score.
    """
    prompt = render_detect(question, config.dataset, context=context)
    k = max(config.logprob_top_k, len(config.affirmative_variants))
    completion = backend.complete(
        CompletionRequest(
            prompt=prompt.text,
            max_tokens=1,
            temperature=0.0,
            logprob_top_k=k,
        )
    )
    if not completion.tokens:
        raise ScoreUnavailableError("backend returned no token logprobs")
    first = completion.tokens[0]
    candidates = dict(first.top_alternatives)
    candidates.setdefault(first.text, first.logprob)
    for variant in config.affirmative_variants:
        if variant in candidates:
            return AmbiguityScore(
                logprob_true=candidates[variant],
                matched_variant=variant,
                question_id=question_id,
            )
    raise ScoreUnavailableError(
        f"score unavailable: none of {list(config.affirmative_variants)} in "
        f"top-{k} candidates {sorted(candidates)}"
    )


def classify(score: AmbiguityScore, config: ClassifierConfig) -> Decision:
    """Ambiguous iff the score strictly exceeds tau; ties route to a direct
    answer, biasing against unnecessary clarification."""
    if score.logprob_true > config.tau:
        return Decision.AMBIGUOUS
    return Decision.UNAMBIGUOUS
