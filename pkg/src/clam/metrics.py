"""Evaluation metrics: contains-accuracy, penalty-adjusted accuracy, AUROC.

An answer counts as correct when it contains a reference answer after
normalization (models tend to answer in full sentences while references are
bare target terms). Adjusted accuracy multiplies a correct answer's score by
a penalty ``lambda`` when the question was unambiguous but the system asked
for clarification anyway. AUROC uses the rank-based Mann-Whitney form with
ties counted one half, so a constant predictor scores exactly 0.5.
"""

from __future__ import annotations

import csv
import io
import json
import string
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "EvalRecord",
    "NormalizationConfig",
    "MetricsConfig",
    "MetricsReport",
    "UndefinedAurocError",
    "normalize_answer",
    "contains_accuracy",
    "adjusted_score",
    "auroc",
    "aggregate",
    "lambda_sweep",
    "sweep_table_csv",
]

DEFAULT_LAMBDA = 0.8

_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


class UndefinedAurocError(ValueError):
    """AUROC needs at least one positive and one negative item."""


@dataclass(frozen=True)
class EvalRecord:
    """Outcome of one question under one policy.

    ``score`` is the continuous ambiguity predictor when the policy computes
    one; policies without a score fall back to the binary
    ``asked_clarification`` flag for ranking purposes.
    """

    question_id: str
    true_ambiguous: bool
    asked_clarification: bool
    correct: bool
    policy: str
    score: Optional[float] = None


@dataclass(frozen=True)
class NormalizationConfig:
    lowercase: bool = True
    strip_punctuation: bool = True
    collapse_whitespace: bool = True


@dataclass(frozen=True)
class MetricsConfig:
    penalty_lambda: float = DEFAULT_LAMBDA
    normalization: NormalizationConfig = field(default_factory=NormalizationConfig)

    def __post_init__(self):
        if not 0 < self.penalty_lambda <= 1:
            raise ValueError("penalty lambda must be in (0, 1]")


def normalize_answer(text: str, config: NormalizationConfig = NormalizationConfig()) -> str:
    if config.lowercase:
        text = text.lower()
    if config.strip_punctuation:
        text = text.translate(_PUNCT_TABLE)
    if config.collapse_whitespace:
        text = " ".join(text.split())
    return text


def contains_accuracy(
    model_answer: str,
    reference_answers: Sequence[str],
    normalization: NormalizationConfig = NormalizationConfig(),
) -> bool:
    """True iff any normalized reference is a substring of the normalized answer."""
    if not reference_answers:
        raise ValueError("reference_answers must be non-empty")
    answer = normalize_answer(model_answer, normalization)
    return any(normalize_answer(ref, normalization) in answer for ref in reference_answers)


def adjusted_score(record: EvalRecord, penalty_lambda: float = DEFAULT_LAMBDA) -> float:
    """Per-record score: 1 for correct, 0 for incorrect, times the penalty
    when an unambiguous question was needlessly clarified."""
    base = 1.0 if record.correct else 0.0
    if not record.true_ambiguous and record.asked_clarification:
        return base * penalty_lambda
    return base


def auroc(scored_items: Sequence[tuple[float, bool]]) -> float:
    """Probability a random positive outranks a random negative, ties 1/2.

    Computed from average ranks (Mann-Whitney U); exactly equivalent to the
    pairwise count (#(s+ > s-) + 0.5 * #(s+ == s-)) / (P * N).
    """
    if not scored_items:
        raise UndefinedAurocError("no items")
    scores = np.asarray([s for s, _ in scored_items], dtype=np.float64)
    labels = np.asarray([bool(p) for _, p in scored_items], dtype=bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAurocError(
            f"AUROC undefined: {n_pos} positives, {n_neg} negatives"
        )

    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    ranks[order] = np.arange(1, len(scores) + 1, dtype=np.float64)
    # Average the ranks inside each tie group.
    sorted_scores = scores[order]
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = (i + j + 2) / 2.0
        i = j + 1

    u = float(ranks[labels].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


@dataclass(frozen=True)
class MetricsReport:
    """Aggregated metrics for one policy over one record set."""

    policy: str
    n_records: int
    accuracy: float
    adjusted_accuracy: float
    penalty_lambda: float
    auroc: Optional[float]
    auroc_undefined_reason: Optional[str]
    counts: dict[str, int]  # keys "ambiguous_asked", "ambiguous_not_asked", ...
    accuracy_ambiguous: Optional[float]
    accuracy_unambiguous: Optional[float]

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


def aggregate(
    records: Sequence[EvalRecord],
    config: MetricsConfig = MetricsConfig(),
    policy: Optional[str] = None,
) -> MetricsReport:
    """Aggregate one policy's records into accuracy, adjusted accuracy, AUROC,
    the ambiguity-by-routing count matrix, and per-subset accuracies.

    The adjusted accuracy is computed in its affine-in-lambda form
    ``accuracy - (1 - lambda) * penalized_correct_fraction``, which equals the
    mean of per-record adjusted scores.
    """
    if not records:
        raise ValueError("records must be non-empty")
    lam = config.penalty_lambda
    n = len(records)
    n_correct = sum(r.correct for r in records)
    n_penalized_correct = sum(
        r.correct and not r.true_ambiguous and r.asked_clarification for r in records
    )
    accuracy = n_correct / n
    adjusted = accuracy - (1.0 - lam) * (n_penalized_correct / n)

    counts = {
        "ambiguous_asked": 0,
        "ambiguous_not_asked": 0,
        "unambiguous_asked": 0,
        "unambiguous_not_asked": 0,
    }
    for r in records:
        key = ("ambiguous" if r.true_ambiguous else "unambiguous") + (
            "_asked" if r.asked_clarification else "_not_asked"
        )
        counts[key] += 1

    ambiguous = [r for r in records if r.true_ambiguous]
    unambiguous = [r for r in records if not r.true_ambiguous]
    acc_ambig = sum(r.correct for r in ambiguous) / len(ambiguous) if ambiguous else None
    acc_unambig = (
        sum(r.correct for r in unambiguous) / len(unambiguous) if unambiguous else None
    )

    roc: Optional[float] = None
    undefined_reason: Optional[str] = None
    try:
        roc = auroc(
            [
                (r.score if r.score is not None else float(r.asked_clarification), r.true_ambiguous)
                for r in records
            ]
        )
    except UndefinedAurocError as exc:
        undefined_reason = str(exc)

    return MetricsReport(
        policy=policy or records[0].policy,
        n_records=n,
        accuracy=accuracy,
        adjusted_accuracy=adjusted,
        penalty_lambda=lam,
        auroc=roc,
        auroc_undefined_reason=undefined_reason,
        counts=counts,
        accuracy_ambiguous=acc_ambig,
        accuracy_unambiguous=acc_unambig,
    )


def lambda_sweep(
    records: Sequence[EvalRecord],
    values: Sequence[float],
    base_config: MetricsConfig = MetricsConfig(),
) -> dict[float, MetricsReport]:
    """Recompute adjusted accuracy over a range of penalty values.

    Outcomes are lambda-independent, so this never touches a backend.
    """
    if not values:
        raise ValueError("sweep values must be non-empty")
    return {
        lam: aggregate(
            records,
            MetricsConfig(penalty_lambda=lam, normalization=base_config.normalization),
        )
        for lam in values
    }


def sweep_table_csv(
    per_policy: dict[str, dict[float, MetricsReport]], values: Sequence[float]
) -> str:
    """Render a lambda-sweep as CSV: one row per policy, one column per value."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["policy"] + [f"{v:g}" for v in values])
    for policy in sorted(per_policy):
        row = [policy] + [
            f"{per_policy[policy][v].adjusted_accuracy:.6f}" for v in values
        ]
        writer.writerow(row)
    return buf.getvalue()
