#!/usr/bin/env python3
"""Walk one question through each dialogue policy, fully offline.

The scripted backend replays canned completions for the bundled sample
corpus, so you can watch the selective policy clarify an ambiguous question
and answer its precise twin directly, while the always-answer baseline
hallucinates on the ambiguous form.
"""

from clam.backend import ScriptedBackend, load_script_rules
from clam.corpus import bundled_sample_path, load_pairs
from clam.oracle import OracleSource
from clam.pipeline import Policy, run_episode

backend = ScriptedBackend(load_script_rules(bundled_sample_path("fixture_rules.json")))
pairs = load_pairs(bundled_sample_path())
pair = next(p for p in pairs if p.id == "p02")

print(f"Ambiguous question:  {pair.ambiguous_text}")
print(f"Precise twin:        {pair.unambiguous_text}")
print(f"Reference answers:   {', '.join(pair.reference_answers)}\n")

oracle = OracleSource.from_pair(backend, pair)

for policy in (Policy.CLAM, Policy.DEFAULT_GPT, Policy.FORCE_CLARIFY):
    for question in (pair.ambiguous_text, pair.unambiguous_text):
        transcript = run_episode(
            question, policy=policy, backend=backend, clarifier=oracle, question_id=pair.id
        )
        tag = "ambiguous " if question == pair.ambiguous_text else "precise   "
        print(f"--- {policy.value} / {tag}---")
        for turn in transcript.turns:
            print(f"  {turn.kind.value:20s} {turn.text}")
        if transcript.ambiguity_score is not None:
            print(f"  score {transcript.ambiguity_score.logprob_true:+.2f} "
                  f"(asked: {transcript.asked_clarification})")
        print()
