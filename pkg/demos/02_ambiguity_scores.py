#!/usr/bin/env python3
"""Score every question in the sample corpus and sweep the decision threshold.

The ambiguity score is the log-probability of the affirmative next token
under the few-shot detection prompt; questions scoring above the threshold
route to a clarifying question. This prints the score distribution, the
routing counts at several thresholds, and the scores' AUROC against the
true labels.
"""

from clam.backend import ScriptedBackend, load_script_rules
from clam.classifier import ClassifierConfig, Decision, ambiguity_score, classify
from clam.corpus import bundled_sample_path, load_pairs
from clam.metrics import auroc

backend = ScriptedBackend(load_script_rules(bundled_sample_path("fixture_rules.json")))
pairs = load_pairs(bundled_sample_path())
config = ClassifierConfig()

scored = []
for pair in pairs:
    for question, truly_ambiguous in (
        (pair.ambiguous_text, True),
        (pair.unambiguous_text, False),
    ):
        score = ambiguity_score(question, backend, config, question_id=pair.id)
        scored.append((question, truly_ambiguous, score))

print(f"{'score':>8s}  {'label':11s} question")
for question, truly_ambiguous, score in scored[:10]:
    label = "ambiguous" if truly_ambiguous else "precise"
    print(f"{score.logprob_true:+8.2f}  {label:11s} {question}")
print(f"... ({len(scored)} questions total)\n")

roc = auroc([(s.logprob_true, label) for _, label, s in scored])
print(f"classifier AUROC vs. true labels: {roc:.3f}\n")

print(f"{'tau':>8s}  {'asks on ambiguous':>18s}  {'asks on precise':>16s}")
for tau in (-2.0, -1.0, -0.5, -0.3, -0.1, 0.0):
    cfg = ClassifierConfig(tau=tau)
    asks_ambiguous = sum(
        1 for _, label, s in scored if label and classify(s, cfg) is Decision.AMBIGUOUS
    )
    asks_precise = sum(
        1 for _, label, s in scored if not label and classify(s, cfg) is Decision.AMBIGUOUS
    )
    print(f"{tau:+8.2f}  {asks_ambiguous:>13d} / 20  {asks_precise:>11d} / 20")
