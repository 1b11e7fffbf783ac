#!/usr/bin/env python3
"""Render the golden prompt files once and freeze them.

The golden inputs are fixed here; the test suite re-renders them and
byte-compares against prompts/golden/. Regenerate only when a template
change is intended, and re-review the diffs.

Run from the repo root:  python scripts/make_prompt_goldens.py
"""

from __future__ import annotations

from pathlib import Path

from clam.prompts import (
    DatasetKind,
    EntityPairContext,
    MultiTurnContext,
    render_answer,
    render_clarify,
    render_detect,
    render_oracle,
)

GOLDEN_DIR = Path(__file__).resolve().parent.parent / "src" / "clam" / "prompts" / "golden"

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

GOLDENS = {
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


def main() -> None:
    GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
    for name, build in GOLDENS.items():
        path = GOLDEN_DIR / name
        path.write_bytes(build().text.encode("utf-8"))
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
