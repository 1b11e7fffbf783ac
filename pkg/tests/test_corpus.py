from __future__ import annotations

import json
from collections import Counter

import pytest

from clam.corpus import (
    CAPABILITIES,
    Capability,
    CorpusError,
    QuestionPair,
    bundled_sample_path,
    load_clariq,
    load_claqua,
    load_pairs,
    serialize_pairs,
    subsample,
    supports,
)
from clam.metrics import normalize_answer
from clam.prompts import DatasetKind


def write_jsonl(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", "utf-8")


PAIR_ROW = {
    "id": "p1",
    "ambiguous": "Where in England was she born?",
    "unambiguous": "Where in England was Dame Judi Dench born?",
    "answers": ["York"],
}


def test_load_single_pair(tmp_path):
    path = tmp_path / "pairs.jsonl"
    write_jsonl(path, [PAIR_ROW])
    pairs = load_pairs(path)
    assert pairs == [
        QuestionPair(
            id="p1",
            ambiguous_text="Where in England was she born?",
            unambiguous_text="Where in England was Dame Judi Dench born?",
            reference_answers=("York",),
        )
    ]


def test_duplicate_ids_rejected_with_line_number(tmp_path):
    path = tmp_path / "pairs.jsonl"
    write_jsonl(path, [PAIR_ROW, PAIR_ROW])
    with pytest.raises(CorpusError, match=r":2: duplicate id 'p1'"):
        load_pairs(path)


def test_equal_questions_rejected(tmp_path):
    path = tmp_path / "pairs.jsonl"
    row = dict(PAIR_ROW, unambiguous=PAIR_ROW["ambiguous"])
    write_jsonl(path, [row])
    with pytest.raises(CorpusError, match="equal"):
        load_pairs(path)


def test_malformed_json_line_reported(tmp_path):
    path = tmp_path / "pairs.jsonl"
    path.write_text('{"id": "p1"\n', "utf-8")
    with pytest.raises(CorpusError, match=r":1: malformed JSON"):
        load_pairs(path)


def test_missing_answers_rejected(tmp_path):
    path = tmp_path / "pairs.jsonl"
    write_jsonl(path, [dict(PAIR_ROW, answers=[])])
    with pytest.raises(CorpusError, match="reference answer"):
        load_pairs(path)


def test_loader_round_trip(tmp_path):
    path = tmp_path / "pairs.jsonl"
    original = bundled_sample_path().read_text("utf-8")
    path.write_text(original, "utf-8")
    assert serialize_pairs(load_pairs(path)) == original


CLARIQ_HEADER = "topic_id\tinitial_request\tclarification_need"


def test_clariq_binarization(tmp_path):
    path = tmp_path / "clariq.tsv"
    path.write_text(
        f"{CLARIQ_HEADER}\nq1\tsome query\t2\nq2\tother query\t3\n", "utf-8"
    )
    items = load_clariq(path)
    assert [i.ambiguous for i in items] == [False, True]
    assert items[0].dataset is DatasetKind.CLARIQ


def test_clariq_need_out_of_range(tmp_path):
    path = tmp_path / "clariq.tsv"
    path.write_text(f"{CLARIQ_HEADER}\nq1\tsome query\t5\n", "utf-8")
    with pytest.raises(CorpusError, match="outside 1-4"):
        load_clariq(path)


def test_clariq_missing_column(tmp_path):
    path = tmp_path / "clariq.tsv"
    path.write_text("topic_id\tquery\n1\tx\n", "utf-8")
    with pytest.raises(CorpusError, match="missing required column"):
        load_clariq(path)


def test_clariq_extra_columns_tolerated(tmp_path):
    path = tmp_path / "clariq.tsv"
    path.write_text(
        "topic_id\tinitial_request\ttopic_desc\tclarification_need\n"
        "q1\tsome query\tdescription\t4\n",
        "utf-8",
    )
    items = load_clariq(path)
    assert items[0].ambiguous is True
    assert items[0].clarification_need == 4


def test_bundled_clariq_sample_loads():
    items = load_clariq(bundled_sample_path("clariq_sample.tsv"))
    assert len(items) == 20
    assert sum(i.ambiguous for i in items) == 10


def test_claqua_single_loads():
    items = load_claqua(bundled_sample_path("claqua_single_sample.jsonl"), "single")
    assert len(items) == 5
    ambiguous = [i for i in items if i.ambiguous]
    assert all(i.context.intended_entity for i in ambiguous)
    assert all(i.reference_answers for i in ambiguous)


def test_claqua_multi_loads():
    items = load_claqua(bundled_sample_path("claqua_multi_sample.jsonl"), "multi")
    assert len(items) == 3
    assert items[0].context.prior_turns == ("What followed the hobbit", "The Lord of the Rings")


def test_claqua_missing_entity_description(tmp_path):
    path = tmp_path / "claqua.jsonl"
    write_jsonl(
        path,
        [{"id": "x", "variant": "single", "entity_name": "A", "entity1": "desc",
          "entity2": "", "question": "q?", "ambiguous": False}],
    )
    with pytest.raises(CorpusError, match="entity descriptions"):
        load_claqua(path, "single")


def test_claqua_ambiguous_requires_intended_entity(tmp_path):
    path = tmp_path / "claqua.jsonl"
    write_jsonl(
        path,
        [{"id": "x", "variant": "single", "entity_name": "A", "entity1": "d1",
          "entity2": "d2", "question": "q?", "ambiguous": True}],
    )
    with pytest.raises(CorpusError, match="intended_entity"):
        load_claqua(path, "single")


def test_claqua_variant_mismatch(tmp_path):
    path = tmp_path / "claqua.jsonl"
    write_jsonl(path, [{"id": "x", "variant": "multi", "question": "q?", "ambiguous": False}])
    with pytest.raises(CorpusError, match="variant"):
        load_claqua(path, "single")


def test_capability_matrix():
    assert CAPABILITIES[DatasetKind.CLARIQ] == frozenset({Capability.DETECT})
    assert supports(DatasetKind.CLAQUA_SINGLE, Capability.FINAL_ACCURACY_AMBIGUOUS)
    assert not supports(DatasetKind.CLAQUA_SINGLE, Capability.FINAL_ACCURACY_UNAMBIGUOUS)
    assert not supports(DatasetKind.CLAQUA_MULTI, Capability.FINAL_ACCURACY_UNAMBIGUOUS)
    assert CAPABILITIES[DatasetKind.AMBIG_TRIVIA] == frozenset(Capability)


def test_subsample_full_size_is_identity(sample_pairs):
    assert subsample(sample_pairs, len(sample_pairs), seed=3) == list(sample_pairs)


def test_subsample_deterministic(sample_pairs):
    assert subsample(sample_pairs, 5, seed=7) == subsample(sample_pairs, 5, seed=7)


def test_subsample_preserves_relative_order(sample_pairs):
    sampled = subsample(sample_pairs, 8, seed=11)
    positions = [sample_pairs.index(p) for p in sampled]
    assert positions == sorted(positions)


def test_subsample_too_large_rejected(sample_pairs):
    with pytest.raises(ValueError):
        subsample(sample_pairs, len(sample_pairs) + 1, seed=0)


def test_subsample_empirical_uniformity():
    counts = Counter()
    for seed in range(10_000):
        (picked,) = subsample(list(range(10)), 1, seed=seed)
        counts[picked] += 1
    for item in range(10):
        assert 900 <= counts[item] <= 1100, counts


def test_bundled_sample_follows_the_two_rules(sample_pairs):
    assert len(sample_pairs) == 20
    kinds = {p.transform_kind.value for p in sample_pairs}
    assert kinds == {"pronoun_substitution", "class_generalization"}


def test_bundled_sample_questions_never_contain_their_answers(sample_pairs):
    # The leakage acceptance property relies on this corpus invariant.
    for pair in sample_pairs:
        for text in (pair.ambiguous_text, pair.unambiguous_text):
            haystack = normalize_answer(text)
            for answer in pair.reference_answers:
                assert normalize_answer(answer) not in haystack, (pair.id, answer)
