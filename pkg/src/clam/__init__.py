"""Selective clarification for ambiguous question answering.

Detects whether a user question is ambiguous from the log-probability of an
affirmative next token under a few-shot prompt, asks a single clarifying
question when it is, and answers from the full dialogue. Ships the prompt
library, a scripted backend for deterministic offline runs, an
oracle-simulated user for automatic evaluation, the metric suite, an
experiment runner, and an HTTP session service for live dialogues.
"""

from .backend import (
    Completion,
    CompletionRequest,
    OpenAICompatibleBackend,
    ScriptedBackend,
    ScriptRule,
    TokenInfo,
    load_script_rules,
)
from .classifier import (
    DEFAULT_TAU,
    AmbiguityScore,
    ClassifierConfig,
    Decision,
    ambiguity_score,
    classify,
)
from .corpus import (
    CAPABILITIES,
    Capability,
    LabeledQuestion,
    QuestionPair,
    bundled_sample_path,
    load_clariq,
    load_claqua,
    load_pairs,
    subsample,
)
from .metrics import (
    EvalRecord,
    MetricsConfig,
    MetricsReport,
    adjusted_score,
    aggregate,
    auroc,
    contains_accuracy,
)
from .oracle import LiveSource, OracleSource
from .pipeline import (
    DialogueTranscript,
    DialogueTurn,
    PipelineConfig,
    Policy,
    TurnKind,
    detect_clarification_request,
    run_episode,
)
from .prompts import (
    DatasetKind,
    PromptText,
    render_answer,
    render_clarify,
    render_detect,
    render_oracle,
)

__version__ = "0.1.0"
