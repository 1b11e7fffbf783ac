from __future__ import annotations

from importlib import resources

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clam.metrics import normalize_answer
from clam.prompts import (
    CLARIFY_INSTRUCTION,
    DatasetKind,
    EntityPairContext,
    MultiTurnContext,
    PromptError,
    PromptStep,
    QA_PREAMBLE,
    UnsupportedStepError,
    detect_cue,
    prompt_version_hash,
    render_answer,
    render_clarify,
    render_detect,
    render_oracle,
)

GOLDEN = resources.files("clam.prompts").joinpath("golden")

SINGLE_CONTEXT = EntityPairContext(
    entity_name="Avalon",
    entity1_description="Avalon is a 1990 American drama film directed by Barry Levinson.",
    entity2_description="Avalon is a 2001 science fiction film directed by Mamoru Oshii.",
)

MULTI_CONTEXT = MultiTurnContext(
    context1="The Hobbit. The Hobbit is a fantasy novel by J. R. R. Tolkien, published in 1937.",
    context2=(
        "The Lord of the Rings. The Lord of the Rings is an epic fantasy novel by"
        " J. R. R. Tolkien, a sequel to The Hobbit."
    ),
    entity1_name="The Hobbit",
    entity2_name="The Lord of the Rings",
    prior_turns=("What followed the hobbit", "The Lord of the Rings"),
)

# The frozen inputs behind each golden file.
GOLDEN_CASES = {
    "ambig_trivia_detect.txt": lambda: render_detect(
        "When did he land on the moon?", DatasetKind.AMBIG_TRIVIA
    ),
    "clariq_detect.txt": lambda: render_detect(
        "Tell me about Obama family tree.", DatasetKind.CLARIQ
    ),
    "claqua_single_detect.txt": lambda: render_detect(
        "What is the running time of Avalon?", DatasetKind.CLAQUA_SINGLE, SINGLE_CONTEXT
    ),
    "claqua_multi_detect.txt": lambda: render_detect(
        "How many chapters does the book have?", DatasetKind.CLAQUA_MULTI, MULTI_CONTEXT
    ),
    "ambig_trivia_clarify.txt": lambda: render_clarify(
        "Which country is Europe's largest producer?", DatasetKind.AMBIG_TRIVIA
    ),
    "claqua_single_clarify.txt": lambda: render_clarify(
        "Casting director for Fakers", DatasetKind.CLAQUA_SINGLE
    ),
    "claqua_multi_clarify.txt": lambda: render_clarify(
        "How many chapters does the book have?", DatasetKind.CLAQUA_MULTI, MULTI_CONTEXT
    ),
    "answer_transcript.txt": lambda: render_answer(
        [
            ("user", "Where in England was she born?"),
            ("assistant", "Who is she?"),
            ("user", "Dame Judi Dench"),
        ]
    ),
    "oracle_clarification.txt": lambda: render_oracle(
        "Who is he?",
        "On what date did Alan Bean land on the moon?",
        "On what date did he land on the moon?",
    ),
}


@pytest.mark.parametrize("name", sorted(GOLDEN_CASES))
def test_rendered_prompts_match_goldens_byte_for_byte(name):
    rendered = GOLDEN_CASES[name]().text.encode("utf-8")
    assert rendered == GOLDEN.joinpath(name).read_bytes()


def test_trivia_detect_prompt_shape():
    question = "When did he land on the moon?"
    prompt = render_detect(question, DatasetKind.AMBIG_TRIVIA)
    assert prompt.step is PromptStep.DETECT
    assert prompt.text.endswith(detect_cue(DatasetKind.AMBIG_TRIVIA, question))
    assert prompt.text == prompt.text.rstrip()
    # The five in-context exemplars come before the final slot.
    assert "Who was the first woman to make a solo flight across this ocean?" in prompt.text
    assert "Where is the multinational corporation based?" in prompt.text


def test_clariq_detect_prompt_shape():
    question = "Tell me about Obama family tree."
    prompt = render_detect(question, DatasetKind.CLARIQ)
    assert prompt.text.endswith("This question is ambiguous:")
    assert prompt.text.endswith(detect_cue(DatasetKind.CLARIQ, question))
    assert "TV on computer." in prompt.text


def test_claqua_detect_final_slot():
    prompt = render_detect("What is the running time of Avalon?", DatasetKind.CLAQUA_SINGLE, SINGLE_CONTEXT)
    assert prompt.text.endswith(
        '"What is the running time of Avalon?" could refer to both entities "Avalon":'
    )
    multi = render_detect("How many chapters does the book have?", DatasetKind.CLAQUA_MULTI, MULTI_CONTEXT)
    assert multi.text.endswith(
        '"How many chapters does the book have?" could refer both to The Hobbit'
        " and The Lord of the Rings:"
    )
    assert "User: What followed the hobbit\nBot: The Lord of the Rings" in multi.text


def test_empty_question_rejected():
    with pytest.raises(PromptError):
        render_detect("", DatasetKind.AMBIG_TRIVIA)
    with pytest.raises(PromptError):
        render_clarify("   ", DatasetKind.AMBIG_TRIVIA)


def test_claqua_requires_context():
    with pytest.raises(PromptError):
        render_detect("Who directed Avalon?", DatasetKind.CLAQUA_SINGLE)
    with pytest.raises(PromptError):
        render_detect("Who directed Avalon?", DatasetKind.CLAQUA_MULTI, SINGLE_CONTEXT)


def test_clariq_does_not_support_clarify():
    with pytest.raises(UnsupportedStepError):
        render_clarify("Tell me about Obama family tree.", DatasetKind.CLARIQ)


def test_trivia_clarify_cue():
    prompt = render_clarify("Which country is Europe's largest producer?", DatasetKind.AMBIG_TRIVIA)
    assert prompt.text.endswith(
        "Bot: To answer this question, I need to ask the following clarifying question:"
    )
    assert "User: Which country is Europe's largest producer?" in prompt.text


def test_claqua_single_clarify_contains_exemplars():
    prompt = render_clarify("Casting director for Fakers", DatasetKind.CLAQUA_SINGLE)
    assert "are you referring to the TV movie or the movie?" in prompt.text
    assert prompt.text.endswith("Question: Casting director for Fakers")


def test_answer_prompt_single_turn_degenerate():
    prompt = render_answer([("user", "Who wrote the novel Moby-Dick?")])
    assert prompt.text == (
        f"{QA_PREAMBLE}\nUser: Who wrote the novel Moby-Dick?\nBot:"
    )


def test_answer_prompt_instruction_suffix():
    prompt = render_answer([("user", "q1")], instruction=CLARIFY_INSTRUCTION)
    first_line = prompt.text.splitlines()[0]
    assert first_line == f"{QA_PREAMBLE} {CLARIFY_INSTRUCTION}"


def test_answer_prompt_rejects_empty_dialogue():
    with pytest.raises(PromptError):
        render_answer([])


single_line_text = st.text(
    alphabet=st.characters(min_codepoint=32, max_codepoint=126), min_size=1, max_size=12
).filter(lambda s: s.strip())

dialogues = st.lists(
    st.tuples(st.sampled_from(["user", "assistant"]), single_line_text),
    min_size=1,
    max_size=4,
)


@settings(max_examples=200, deadline=None)
@given(dialogues, dialogues)
def test_answer_rendering_injective_on_distinct_dialogues(a, b):
    if a == b:
        return
    assert render_answer(a).text != render_answer(b).text


def test_oracle_prompt_contains_all_slots():
    prompt = render_oracle("Who is he?", "unambiguous twin", "ambiguous original")
    assert "Clarifying question: Who is he?." in prompt.text
    assert "The question the user actually means: unambiguous twin." in prompt.text
    assert "The user's ambiguous question: ambiguous original." in prompt.text


def test_oracle_prompt_never_contains_reference_answers(sample_pairs):
    for pair in sample_pairs:
        prompt = render_oracle(
            "Which one do you mean?", pair.unambiguous_text, pair.ambiguous_text
        )
        haystack = normalize_answer(prompt.text)
        for answer in pair.reference_answers:
            assert normalize_answer(answer) not in haystack


def test_oracle_rejects_empty_inputs():
    with pytest.raises(PromptError):
        render_oracle("", "u", "a")
    with pytest.raises(PromptError):
        render_oracle("c", "", "a")
    with pytest.raises(PromptError):
        render_oracle("c", "u", "")


def test_prompt_version_hash_is_stable_sha256():
    first = prompt_version_hash()
    assert first == prompt_version_hash()
    assert len(first) == 64
    int(first, 16)
