"""Dataset formats, loaders, validators, and seeded subsampling.

Question pairs are stored as JSONL (one pair per line), search-query corpora
as TSV, and entity-disambiguation corpora as JSONL with a ``variant`` field.
All loaders validate eagerly and attach line numbers to errors; corpora are
immutable after load.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, TypeVar, Union

from .prompts import DatasetKind, EntityPairContext, MultiTurnContext

__all__ = [
    "TransformKind",
    "QuestionPair",
    "LabeledQuestion",
    "Capability",
    "CAPABILITIES",
    "supports",
    "CorpusError",
    "load_pairs",
    "load_clariq",
    "load_claqua",
    "subsample",
    "SUBSAMPLE_GENERATOR",
    "bundled_sample_path",
]

T = TypeVar("T")

# Seeded draws use Python's Mersenne Twister via random.Random(seed).sample;
# the name is recorded in run configs so results stay reproducible.
SUBSAMPLE_GENERATOR = "python-random-mt19937"


class CorpusError(ValueError):
    """A corpus file failed validation; message carries id/line context."""


class TransformKind(str, Enum):
    """How an unambiguous question was turned into its ambiguous twin."""

    PRONOUN_SUBSTITUTION = "pronoun_substitution"
    CLASS_GENERALIZATION = "class_generalization"


@dataclass(frozen=True)
class QuestionPair:
    """An ambiguous question, its disambiguated twin, and reference answers.

    The unambiguous text is the privileged information handed to the oracle
    user simulator during evaluation.
    """

    id: str
    ambiguous_text: str
    unambiguous_text: str
    reference_answers: tuple[str, ...]
    transform_kind: Optional[TransformKind] = None

    def __post_init__(self):
        if not self.id:
            raise CorpusError("pair id must be non-empty")
        if not self.ambiguous_text or not self.unambiguous_text:
            raise CorpusError(f"pair {self.id}: questions must be non-empty")
        if self.ambiguous_text == self.unambiguous_text:
            raise CorpusError(f"pair {self.id}: ambiguous and unambiguous text are equal")
        if not self.reference_answers:
            raise CorpusError(f"pair {self.id}: at least one reference answer required")


@dataclass(frozen=True)
class LabeledQuestion:
    """A single question with an ambiguity label and optional context."""

    id: str
    text: str
    ambiguous: bool
    dataset: DatasetKind
    context: Optional[Union[EntityPairContext, MultiTurnContext]] = None
    clarification_need: Optional[int] = None
    reference_answers: tuple[str, ...] = ()

    def __post_init__(self):
        if self.clarification_need is not None:
            if self.ambiguous != (self.clarification_need in (3, 4)):
                raise CorpusError(
                    f"{self.id}: ambiguous={self.ambiguous} inconsistent with "
                    f"clarification_need={self.clarification_need}"
                )


class Capability(str, Enum):
    DETECT = "detect"
    CLARIFY = "clarify"
    FINAL_ACCURACY_AMBIGUOUS = "final_accuracy_ambiguous"
    FINAL_ACCURACY_UNAMBIGUOUS = "final_accuracy_unambiguous"


# Which pipeline steps each dataset can evaluate. Search-query corpora have
# no answers at all; entity corpora have answers only for ambiguous items.
CAPABILITIES: dict[DatasetKind, frozenset[Capability]] = {
    DatasetKind.CLARIQ: frozenset({Capability.DETECT}),
    DatasetKind.CLAQUA_SINGLE: frozenset(
        {Capability.DETECT, Capability.CLARIFY, Capability.FINAL_ACCURACY_AMBIGUOUS}
    ),
    DatasetKind.CLAQUA_MULTI: frozenset(
        {Capability.DETECT, Capability.CLARIFY, Capability.FINAL_ACCURACY_AMBIGUOUS}
    ),
    DatasetKind.AMBIG_TRIVIA: frozenset(
        {
            Capability.DETECT,
            Capability.CLARIFY,
            Capability.FINAL_ACCURACY_AMBIGUOUS,
            Capability.FINAL_ACCURACY_UNAMBIGUOUS,
        }
    ),
}


def supports(dataset: DatasetKind, capability: Capability) -> bool:
    return capability in CAPABILITIES[dataset]


def _read_jsonl(path: Path):
    for lineno, line in enumerate(path.read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            yield lineno, json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}:{lineno}: malformed JSON: {exc}") from exc


def load_pairs(path: str | Path) -> list[QuestionPair]:
    """Load and validate a JSONL file of question pairs.

    Each line holds ``{"id", "ambiguous", "unambiguous", "answers",
    "transform"?}``. Duplicate ids and pairs violating the type invariants
    are rejected with the offending line number.
    """
    path = Path(path)
    pairs: list[QuestionPair] = []
    seen: dict[str, int] = {}
    for lineno, obj in _read_jsonl(path):
        try:
            transform = obj.get("transform")
            pair = QuestionPair(
                id=str(obj["id"]),
                ambiguous_text=obj["ambiguous"],
                unambiguous_text=obj["unambiguous"],
                reference_answers=tuple(obj["answers"]),
                transform_kind=TransformKind(transform) if transform else None,
            )
        except KeyError as exc:
            raise CorpusError(f"{path}:{lineno}: missing field {exc}") from exc
        except (CorpusError, ValueError) as exc:
            raise CorpusError(f"{path}:{lineno}: {exc}") from exc
        if pair.id in seen:
            raise CorpusError(
                f"{path}:{lineno}: duplicate id {pair.id!r} (first seen on line {seen[pair.id]})"
            )
        seen[pair.id] = lineno
        pairs.append(pair)
    return pairs


def serialize_pairs(pairs: Sequence[QuestionPair]) -> str:
    """Canonical JSONL form of ``pairs`` (the loader's round-trip inverse)."""
    lines = []
    for p in pairs:
        obj = {
            "id": p.id,
            "ambiguous": p.ambiguous_text,
            "unambiguous": p.unambiguous_text,
            "answers": list(p.reference_answers),
        }
        if p.transform_kind is not None:
            obj["transform"] = p.transform_kind.value
        lines.append(json.dumps(obj, ensure_ascii=False))
    return "\n".join(lines) + "\n"


def load_clariq(path: str | Path) -> list[LabeledQuestion]:
    """Load a search-query TSV and binarize its 1-4 clarification needs.

    Required columns (by header): ``initial_request`` and
    ``clarification_need``; ``topic_id`` is used as the id when present.
    Needs of 1 and 2 map to unambiguous, 3 and 4 to ambiguous.
    """
    path = Path(path)
    lines = path.read_text("utf-8").splitlines()
    if not lines:
        raise CorpusError(f"{path}: empty file")
    header = lines[0].rstrip("\n").split("\t")
    try:
        text_col = header.index("initial_request")
        need_col = header.index("clarification_need")
    except ValueError as exc:
        raise CorpusError(
            f"{path}: missing required column ({exc}); header was {header}"
        ) from exc
    id_col = header.index("topic_id") if "topic_id" in header else None

    out: list[LabeledQuestion] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) < len(header):
            raise CorpusError(f"{path}:{lineno}: expected {len(header)} columns, got {len(cells)}")
        try:
            need = int(cells[need_col])
        except ValueError as exc:
            raise CorpusError(f"{path}:{lineno}: non-integer clarification_need") from exc
        if need not in (1, 2, 3, 4):
            raise CorpusError(f"{path}:{lineno}: clarification_need {need} outside 1-4")
        qid = cells[id_col] if id_col is not None else f"clariq-{lineno}"
        text = cells[text_col].strip()
        if not text:
            raise CorpusError(f"{path}:{lineno}: empty query text")
        out.append(
            LabeledQuestion(
                id=qid,
                text=text,
                ambiguous=need in (3, 4),
                dataset=DatasetKind.CLARIQ,
                clarification_need=need,
            )
        )
    return out


def load_claqua(path: str | Path, variant: str) -> list[LabeledQuestion]:
    """Load an entity-disambiguation JSONL file.

    ``variant`` is ``"single"`` (two same-named entities plus a question) or
    ``"multi"`` (a prior dialogue whose last turn may refer to either of two
    earlier referents). Ambiguous items must carry the intended-entity label;
    answers are present for ambiguous items only.
    """
    if variant not in ("single", "multi"):
        raise ValueError(f"variant must be 'single' or 'multi', got {variant!r}")
    path = Path(path)
    dataset = DatasetKind.CLAQUA_SINGLE if variant == "single" else DatasetKind.CLAQUA_MULTI
    out: list[LabeledQuestion] = []
    for lineno, obj in _read_jsonl(path):
        if obj.get("variant") not in (None, variant):
            raise CorpusError(
                f"{path}:{lineno}: variant {obj['variant']!r} does not match requested {variant!r}"
            )
        try:
            ambiguous = bool(obj["ambiguous"])
            question = obj["question"]
            qid = str(obj["id"])
            if variant == "single":
                context = EntityPairContext(
                    entity_name=obj["entity_name"],
                    entity1_description=obj["entity1"],
                    entity2_description=obj["entity2"],
                    intended_entity=obj.get("intended_entity"),
                )
                if not context.entity1_description or not context.entity2_description:
                    raise CorpusError("both entity descriptions are required")
            else:
                context = MultiTurnContext(
                    context1=obj["context1"],
                    context2=obj["context2"],
                    entity1_name=obj["entity1_name"],
                    entity2_name=obj["entity2_name"],
                    prior_turns=tuple(obj.get("prior_turns", ())),
                    intended_entity=obj.get("intended_entity"),
                )
        except KeyError as exc:
            raise CorpusError(f"{path}:{lineno}: missing field {exc}") from exc
        except CorpusError as exc:
            raise CorpusError(f"{path}:{lineno}: {exc}") from exc
        if ambiguous and not context.intended_entity:
            raise CorpusError(
                f"{path}:{lineno}: ambiguous item missing intended_entity label"
            )
        answers = tuple(obj.get("answers", ()))
        out.append(
            LabeledQuestion(
                id=qid,
                text=question,
                ambiguous=ambiguous,
                dataset=dataset,
                context=context,
                reference_answers=answers,
            )
        )
    return out


def subsample(items: Sequence[T], n: int, seed: int) -> list[T]:
    """Uniform sample of ``n`` items without replacement, input order kept.

    The same (seed, input order) always yields the same output.
    """
    if n > len(items):
        raise ValueError(f"cannot sample {n} from {len(items)} items")
    indices = random.Random(seed).sample(range(len(items)), n)
    return [items[i] for i in sorted(indices)]


def bundled_sample_path(name: str = "ambiguous_trivia_sample.jsonl") -> Path:
    """Path to one of the sample corpora shipped with the package."""
    return Path(str(resources.files("clam").joinpath("data", name)))
