#!/usr/bin/env python3
"""Regenerate the committed scripted-backend rules for the sample corpus.

Builds exact-match rules for every prompt the four policies can send while
evaluating the bundled 20-pair corpus: detection scores that cleanly separate
ambiguous from unambiguous questions, per-pair clarifying questions, oracle
clarifications that name the disambiguating term without ever containing a
reference answer, wrong direct answers to ambiguous questions, and correct
answers everywhere clarification happened (or none was needed).

Run from the repo root:  python scripts/make_fixture_backend.py
"""

from __future__ import annotations

import json
from pathlib import Path

from clam.corpus import load_pairs
from clam.pipeline import DEFAULT_STOP_SEQUENCES  # noqa: F401 (documented default)
from clam.prompts import (
    CLARIFY_INSTRUCTION,
    DatasetKind,
    render_answer,
    render_clarify,
    render_detect,
    render_oracle,
)

DATA_DIR = Path(__file__).resolve().parent.parent / "src" / "clam" / "data"

# Per-pair dialogue material keyed by pair id:
# (clarifying question, oracle clarification, wrong direct answer, correct answer)
SCRIPT = {
    "p01": ("Who is she?", "Dame Judi Dench", "She was born in London.",
            "Dame Judi Dench was born in York."),
    "p02": ("Who is he?", "Alan Bean", "He landed on the moon in July 1969.",
            "Alan Bean landed on the moon on November 19, 1969."),
    "p03": ("Which kind of producer do you mean?", "The silk industry",
            "Germany is Europe's largest producer.",
            "Italy is Europe's largest silk producer."),
    "p04": ("Which channel do you mean?", "The English Channel",
            "The first person to swim across it was David Walliams.",
            "Matthew Webb was the first person to swim across it."),
    "p05": ("Which car company do you mean?", "Ferrari",
            "The car company is headquartered in Detroit.",
            "Ferrari is headquartered in Maranello."),
    "p06": ("Who are they?", "The Beatles", "They split up in 1981.",
            "The Beatles split up in 1970."),
    "p07": ("Which country do you mean?", "Australia", "The capital is Ottawa.",
            "The capital of Australia is Canberra."),
    "p08": ("Which novel do you mean?", "Moby-Dick",
            "The novel was written by Charles Dickens.",
            "Moby-Dick was written by Herman Melville."),
    "p09": ("Who is he?", "Nelson Mandela", "He became president in 1989.",
            "Nelson Mandela became president of South Africa in 1994."),
    "p10": ("Which planet do you mean?", "Mars", "The planet has dozens of moons.",
            "Mars has two moons, Phobos and Deimos."),
    "p11": ("Which treaty do you mean?", "The Treaty of Versailles",
            "The treaty was signed in 1648.",
            "The Treaty of Versailles was signed in 1919."),
    "p12": ("Who is he?", "Abraham Lincoln", "He was assassinated in Dallas.",
            "Abraham Lincoln was assassinated at Ford's Theatre."),
    "p13": ("Which portrait do you mean?", "The Mona Lisa",
            "The portrait was painted by Rembrandt.",
            "The Mona Lisa was painted by Leonardo da Vinci."),
    "p14": ("Which museum do you mean?", "The Louvre",
            "The museum is located in Berlin.",
            "The Louvre is located in Paris."),
    "p15": ("Who is she?", "Serena Williams", "She won her first title in 1998.",
            "Serena Williams won her first Wimbledon singles title in 2002."),
    "p16": ("Which city do you mean?", "Vienna", "The Thames flows through the city.",
            "The Danube flows through Vienna."),
    "p17": ("Which film do you mean?", "Jaws",
            "The film was directed by Alfred Hitchcock.",
            "Jaws was directed by Steven Spielberg."),
    "p18": ("Which country do you mean?", "Brazil",
            "Spanish is spoken in the country.",
            "Portuguese is spoken in Brazil."),
    "p19": ("Which war do you mean?", "The Second World War",
            "The war ended in 1918.",
            "The Second World War ended in 1945."),
    "p20": ("Which opera do you mean?", "Carmen",
            "The opera was composed by Verdi.",
            "The opera Carmen was composed by Georges Bizet."),
}

# Every fifth pair, the instruction-prompted baseline notices the ambiguity
# and asks; elsewhere it answers (wrongly) like the default policy.
BASELINE_ASKS = {"p05", "p10", "p15", "p20"}

GENERIC_CLARIFY = "Could you clarify what exactly you are asking about?"


def detect_rule(prompt: str, affirm_lp: float, negate_lp: float, affirmative: bool) -> dict:
    top_token = " True" if affirmative else " False"
    top_lp = affirm_lp if affirmative else negate_lp
    other_token = " False" if affirmative else " True"
    other_lp = negate_lp if affirmative else affirm_lp
    return {
        "matcher_kind": "exact",
        "matcher_value": prompt,
        "response": top_token,
        "logprobs": [
            {
                "token": top_token,
                "logprob": top_lp,
                "top": [[top_token, top_lp], [other_token, other_lp]],
            }
        ],
    }


def text_rule(prompt: str, response: str) -> dict:
    return {"matcher_kind": "exact", "matcher_value": prompt, "response": response}


def main() -> None:
    pairs = load_pairs(DATA_DIR / "ambiguous_trivia_sample.jsonl")
    kind = DatasetKind.AMBIG_TRIVIA
    rules: list[dict] = []

    for i, pair in enumerate(pairs):
        clarifying_q, clarification, wrong, correct = SCRIPT[pair.id]
        amb, unamb = pair.ambiguous_text, pair.unambiguous_text
        # Ambiguous scores stay above the default threshold of -0.3,
        # unambiguous ones fall well below it.
        amb_lp = round(-0.01 - 0.01 * i, 4)
        unamb_lp = round(-0.5 - 0.15 * i, 4)

        rules.append(detect_rule(render_detect(amb, kind).text, amb_lp, -3.1, True))
        rules.append(detect_rule(render_detect(unamb, kind).text, unamb_lp, -0.04, False))

        for question in (amb, unamb):
            rules.append(text_rule(render_clarify(question, kind).text,
                                   clarifying_q if question == amb else GENERIC_CLARIFY))
            cq = clarifying_q if question == amb else GENERIC_CLARIFY
            rules.append(text_rule(render_oracle(cq, unamb, question).text, clarification))

        def answer_prompt(turns, instruction=None):
            return render_answer(turns, instruction=instruction, dataset=kind).text

        amb_dialogue = [
            ("user", amb),
            ("assistant", clarifying_q),
            ("user", clarification),
        ]
        unamb_dialogue = [
            ("user", unamb),
            ("assistant", GENERIC_CLARIFY),
            ("user", clarification),
        ]

        # Direct answers: wrong on the ambiguous form, right on the precise one.
        rules.append(text_rule(answer_prompt([("user", amb)]), wrong))
        rules.append(text_rule(answer_prompt([("user", unamb)]), correct))
        # Answers after a clarifying exchange are correct for both forms.
        rules.append(text_rule(answer_prompt(amb_dialogue), correct))
        rules.append(text_rule(answer_prompt(unamb_dialogue), correct))

        # Instruction-prompted baseline: occasionally asks, otherwise answers.
        baseline_first = clarifying_q if pair.id in BASELINE_ASKS else wrong
        rules.append(text_rule(answer_prompt([("user", amb)], CLARIFY_INSTRUCTION), baseline_first))
        rules.append(text_rule(answer_prompt([("user", unamb)], CLARIFY_INSTRUCTION), correct))
        if pair.id in BASELINE_ASKS:
            rules.append(text_rule(answer_prompt(amb_dialogue, CLARIFY_INSTRUCTION), correct))

    out = DATA_DIR / "fixture_rules.json"
    out.write_text(json.dumps(rules, indent=1, ensure_ascii=False) + "\n", "utf-8")
    print(f"wrote {len(rules)} rules to {out}")


if __name__ == "__main__":
    main()
