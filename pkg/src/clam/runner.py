"""Experiment orchestration: dataset x policy sweeps, persistence, reports.

A run scores a detection subsample with the ambiguity classifier, executes
dialogue episodes for each requested policy over a QA subsample, and
aggregates the metric suite per policy. Artifacts are written incrementally
(one JSONL line per finished episode) keyed by (policy, question id), so an
interrupted run resumes where it stopped. Penalty sweeps reuse recorded
outcomes and never re-query a model; threshold sweeps re-run the routing.
"""

from __future__ import annotations

import csv
import json
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backend import Backend, BackendError, OpenAICompatibleBackend, ScriptedBackend, load_script_rules
from .classifier import (
    DEFAULT_AFFIRMATIVE_VARIANTS,
    DEFAULT_TAU,
    ClassifierConfig,
    ScoreUnavailableError,
    ambiguity_score,
)
from .corpus import (
    Capability,
    LabeledQuestion,
    QuestionPair,
    SUBSAMPLE_GENERATOR,
    load_clariq,
    load_claqua,
    load_pairs,
    subsample,
    supports,
)
from .metrics import (
    DEFAULT_LAMBDA,
    EvalRecord,
    MetricsConfig,
    MetricsReport,
    UndefinedAurocError,
    aggregate,
    auroc,
    contains_accuracy,
    lambda_sweep,
    sweep_table_csv,
)
from .oracle import OracleSource
from .pipeline import (
    DialogueTranscript,
    EpisodeError,
    PipelineConfig,
    Policy,
    detect_clarification_request,
    run_episode,
    transcript_from_obj,
    transcript_to_obj,
)
from .prompts import DatasetKind

__all__ = [
    "ConfigError",
    "RunConfig",
    "EvalRun",
    "load_run_config",
    "build_backend",
    "run_experiment",
    "sweep",
    "report",
]

DEFAULT_SWEEP_LAMBDAS = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


class ConfigError(ValueError):
    """A run configuration is inconsistent with the dataset or corpus."""


@dataclass(frozen=True)
class RunConfig:
    """Everything one experiment needs, loadable from JSON or TOML."""

    dataset_path: Path
    dataset_kind: DatasetKind
    policies: tuple[Policy, ...]
    backend_spec: dict
    out_dir: Path
    tau: float = DEFAULT_TAU
    affirmative_variants: tuple[str, ...] = DEFAULT_AFFIRMATIVE_VARIANTS
    penalty_lambda: float = DEFAULT_LAMBDA
    detect_sample: Optional[int] = 400
    qa_sample: Optional[int] = 100
    seed: int = 0
    workers: int = 1

    @classmethod
    def from_dict(cls, obj: dict, base_dir: Path = Path(".")) -> "RunConfig":
        def sample_size(value):
            # JSON null or the string "all" (TOML has no null) mean the
            # whole corpus.
            if value is None or value == "all":
                return None
            return int(value)

        try:
            dataset = obj["dataset"]
            backend_spec = obj["backend"]
            kind = DatasetKind(dataset["kind"])
            policies = tuple(Policy(p) for p in obj.get("policies", []))
            classifier = obj.get("classifier", {})
            metrics_cfg = obj.get("metrics", {})
            sampling = obj.get("sampling", {})
            return cls(
                dataset_path=(base_dir / dataset["path"]).resolve(),
                dataset_kind=kind,
                policies=policies,
                backend_spec=dict(backend_spec),
                out_dir=(base_dir / obj["out_dir"]).resolve(),
                tau=float(classifier.get("tau", DEFAULT_TAU)),
                affirmative_variants=tuple(
                    classifier.get("affirmative_variants", DEFAULT_AFFIRMATIVE_VARIANTS)
                ),
                penalty_lambda=float(metrics_cfg.get("lambda", DEFAULT_LAMBDA)),
                detect_sample=sample_size(sampling.get("detect", 400)),
                qa_sample=sample_size(sampling.get("qa", 100)),
                seed=int(sampling.get("seed", 0)),
                workers=int(obj.get("workers", 1)),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"invalid run config: {exc}") from exc

    def snapshot(self) -> dict:
        return {
            "dataset": {"path": str(self.dataset_path), "kind": self.dataset_kind.value},
            "policies": [p.value for p in self.policies],
            "backend": self.backend_spec,
            "classifier": {
                "tau": self.tau,
                "affirmative_variants": list(self.affirmative_variants),
            },
            "metrics": {"lambda": self.penalty_lambda},
            "sampling": {
                "detect": self.detect_sample,
                "qa": self.qa_sample,
                "seed": self.seed,
                "generator": SUBSAMPLE_GENERATOR,
            },
            "out_dir": str(self.out_dir),
            "workers": self.workers,
        }


def load_run_config(path: str | Path, **overrides) -> RunConfig:
    """Load a JSON or TOML config file; keyword overrides win."""
    path = Path(path)
    if path.suffix == ".toml":
        obj = tomllib.loads(path.read_text("utf-8"))
    else:
        obj = json.loads(path.read_text("utf-8"))
    config = RunConfig.from_dict(obj, base_dir=path.parent)
    if overrides:
        config = replace(config, **overrides)
    return config


def build_backend(spec: dict, base_dir: Path = Path(".")) -> Backend:
    """Construct a backend from its config spec.

    ``{"kind": "scripted", "rules_path": ...}`` or
    ``{"kind": "openai", "model": ..., "api_base"?: ...}``. Credentials come
    from the environment, never from the spec.
    """
    kind = spec.get("kind")
    if kind == "scripted":
        return ScriptedBackend(load_script_rules(base_dir / spec["rules_path"]))
    if kind == "openai":
        return OpenAICompatibleBackend(
            model=spec["model"], api_base=spec.get("api_base")
        )
    raise ConfigError(f"unknown backend kind {kind!r}")


class _CountingBackend:
    """Tallies requests and completion tokens around any backend."""

    def __init__(self, inner: Backend):
        self.inner = inner
        self.requests = 0
        self.completion_tokens = 0
        self._lock = threading.Lock()

    def complete(self, request):
        completion = self.inner.complete(request)
        with self._lock:
            self.requests += 1
            self.completion_tokens += len(completion.tokens)
        return completion


@dataclass(frozen=True)
class EvalItem:
    """One question to evaluate, with its label and oracle material."""

    item_id: str
    question: str
    true_ambiguous: bool
    dataset: DatasetKind
    context: object = None
    reference_answers: tuple[str, ...] = ()
    pair: Optional[QuestionPair] = None
    labeled: Optional[LabeledQuestion] = None


@dataclass
class EvalRun:
    """A finished experiment: records, transcripts, and per-policy reports."""

    config: dict
    records: list[EvalRecord]
    transcripts: list[DialogueTranscript]
    reports: dict[str, MetricsReport]
    detection: Optional[dict]
    excluded: dict[str, int]
    request_count: int
    completion_tokens: int
    wall_clock_seconds: float
    out_dir: Path


def _load_corpus(config: RunConfig):
    kind = config.dataset_kind
    if kind is DatasetKind.AMBIG_TRIVIA:
        return load_pairs(config.dataset_path)
    if kind is DatasetKind.CLARIQ:
        return load_clariq(config.dataset_path)
    variant = "single" if kind is DatasetKind.CLAQUA_SINGLE else "multi"
    return load_claqua(config.dataset_path, variant)


def _expand_items(config: RunConfig, corpus) -> tuple[list[EvalItem], list[EvalItem]]:
    """Build (detect_items, qa_items) for the dataset, before subsampling."""
    kind = config.dataset_kind
    detect: list[EvalItem] = []
    qa: list[EvalItem] = []
    if kind is DatasetKind.AMBIG_TRIVIA:
        for pair in corpus:
            amb = EvalItem(
                item_id=f"{pair.id}:ambiguous",
                question=pair.ambiguous_text,
                true_ambiguous=True,
                dataset=kind,
                reference_answers=pair.reference_answers,
                pair=pair,
            )
            unamb = EvalItem(
                item_id=f"{pair.id}:unambiguous",
                question=pair.unambiguous_text,
                true_ambiguous=False,
                dataset=kind,
                reference_answers=pair.reference_answers,
                pair=pair,
            )
            detect.extend([amb, unamb])
            qa.extend([amb, unamb])
    else:
        for item in corpus:
            entry = EvalItem(
                item_id=item.id,
                question=item.text,
                true_ambiguous=item.ambiguous,
                dataset=kind,
                context=item.context,
                reference_answers=item.reference_answers,
                labeled=item,
            )
            detect.append(entry)
            # Entity corpora carry answers (and an oracle label) for the
            # ambiguous items only; search-query corpora have none at all.
            if supports(kind, Capability.FINAL_ACCURACY_AMBIGUOUS) and item.ambiguous:
                qa.append(entry)
    return detect, qa


def _validate(config: RunConfig, detect_items, qa_items) -> None:
    if config.policies and not supports(config.dataset_kind, Capability.FINAL_ACCURACY_AMBIGUOUS):
        raise ConfigError(
            f"{config.dataset_kind.value} supports ambiguity detection only; "
            "remove the policies list to run it"
        )
    if config.detect_sample is not None and config.detect_sample > len(detect_items):
        raise ConfigError(
            f"detect sample {config.detect_sample} exceeds corpus size {len(detect_items)}"
        )
    if config.policies and config.qa_sample is not None and config.qa_sample > len(qa_items):
        raise ConfigError(
            f"qa sample {config.qa_sample} exceeds corpus size {len(qa_items)}"
        )


def _classifier_config(config: RunConfig) -> ClassifierConfig:
    return ClassifierConfig(
        tau=config.tau,
        affirmative_variants=config.affirmative_variants,
        dataset=config.dataset_kind,
    )


def _clarifier_for(item: EvalItem, backend: Backend) -> Optional[OracleSource]:
    if item.pair is not None:
        return OracleSource.from_pair(backend, item.pair)
    if item.labeled is not None and item.labeled.context is not None:
        if item.labeled.context.intended_entity:
            return OracleSource.from_labeled(backend, item.labeled)
    return None


def _read_jsonl_file(path: Path) -> list[dict]:
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text("utf-8").splitlines() if line.strip()]


def _utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def run_experiment(
    config: RunConfig,
    backend: Optional[Backend] = None,
    clock: Callable[[], str] = _utc_now,
) -> EvalRun:
    """Execute the configured experiment, resuming any partial artifacts.

    Per-question failures are recorded in ``failures.jsonl`` and excluded
    from the aggregates; the exclusion counts are reported in
    ``metrics.json`` rather than silently dropped. Passing a fixed ``clock``
    makes every persisted artifact byte-identical across repeated scripted
    runs.
    """
    started = time.monotonic()
    corpus = _load_corpus(config)
    detect_items, qa_items = _expand_items(config, corpus)
    _validate(config, detect_items, qa_items)

    if backend is None:
        backend = build_backend(config.backend_spec, base_dir=Path("."))
    counting = _CountingBackend(backend)

    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(
        json.dumps(config.snapshot(), indent=2, sort_keys=True) + "\n", "utf-8"
    )

    if config.detect_sample is not None:
        detect_items = subsample(detect_items, config.detect_sample, config.seed)
    if config.policies and config.qa_sample is not None:
        qa_items = subsample(qa_items, config.qa_sample, config.seed)

    excluded: dict[str, int] = {}
    detection = _run_detection(config, detect_items, counting, out, excluded)

    records: list[EvalRecord] = []
    transcripts: list[DialogueTranscript] = []
    if config.policies:
        records, transcripts = _run_episodes(
            config, qa_items, counting, out, excluded, clock
        )

    reports: dict[str, MetricsReport] = {}
    metrics_config = MetricsConfig(penalty_lambda=config.penalty_lambda)
    for policy in config.policies:
        policy_records = [r for r in records if r.policy == policy.value]
        if policy_records:
            reports[policy.value] = aggregate(policy_records, metrics_config)

    wall = time.monotonic() - started
    metrics_obj = {
        "config": config.snapshot(),
        "detection": detection,
        "policies": {name: json.loads(rep.to_json()) for name, rep in reports.items()},
        "excluded": excluded,
        "request_count": counting.requests,
        "completion_tokens": counting.completion_tokens,
    }
    (out / "metrics.json").write_text(
        json.dumps(metrics_obj, indent=2, sort_keys=True) + "\n", "utf-8"
    )
    (out / "timing.json").write_text(
        json.dumps({"wall_clock_seconds": wall}) + "\n", "utf-8"
    )

    return EvalRun(
        config=config.snapshot(),
        records=records,
        transcripts=transcripts,
        reports=reports,
        detection=detection,
        excluded=excluded,
        request_count=counting.requests,
        completion_tokens=counting.completion_tokens,
        wall_clock_seconds=wall,
        out_dir=out,
    )


def _run_detection(config, items, backend, out: Path, excluded) -> Optional[dict]:
    """Score the detection subsample with the classifier; resumable by id."""
    if not items:
        return None
    classifier = _classifier_config(config)
    path = out / "detect_scores.jsonl"
    done = {row["item_id"]: row for row in _read_jsonl_file(path)}

    rows = []
    with path.open("a", encoding="utf-8") as sink:
        for item in items:
            if item.item_id in done:
                rows.append(done[item.item_id])
                continue
            try:
                score = ambiguity_score(
                    item.question, backend, classifier,
                    context=item.context, question_id=item.item_id,
                )
            except (ScoreUnavailableError, BackendError) as exc:
                excluded["detection"] = excluded.get("detection", 0) + 1
                _append_failure(out, "detection", item.item_id, exc)
                continue
            row = {
                "item_id": item.item_id,
                "score": score.logprob_true,
                "matched_variant": score.matched_variant,
                "true_ambiguous": item.true_ambiguous,
            }
            sink.write(json.dumps(row, ensure_ascii=False) + "\n")
            rows.append(row)

    result: dict = {"n": len(rows)}
    try:
        result["auroc"] = auroc([(r["score"], r["true_ambiguous"]) for r in rows])
    except UndefinedAurocError as exc:
        result["auroc"] = None
        result["auroc_undefined_reason"] = str(exc)
    return result


def _append_failure(out: Path, stage: str, item_id: str, exc: Exception) -> None:
    with (out / "failures.jsonl").open("a", encoding="utf-8") as sink:
        sink.write(
            json.dumps(
                {"stage": stage, "item_id": item_id, "error": f"{type(exc).__name__}: {exc}"},
                ensure_ascii=False,
            )
            + "\n"
        )


def _run_episodes(config, items, backend, out: Path, excluded, clock):
    transcripts_path = out / "transcripts.jsonl"
    records_path = out / "records.jsonl"
    done = {
        (row["policy"], row["question_id"])
        for row in _read_jsonl_file(records_path)
    }
    prior_transcripts = {
        (row["policy"], row["question_id"]): row
        for row in _read_jsonl_file(transcripts_path)
    }

    pipeline_config = PipelineConfig(
        dataset=config.dataset_kind, classifier=_classifier_config(config)
    )
    tasks = [
        (policy, item)
        for policy in config.policies
        for item in items
        if (policy.value, item.item_id) not in done
    ]

    def execute(policy: Policy, item: EvalItem):
        clarifier = _clarifier_for(item, backend)
        return run_episode(
            item.question,
            policy=policy,
            backend=backend,
            clarifier=clarifier,
            config=pipeline_config,
            context=item.context,
            question_id=item.item_id,
        )

    # Results are written in submission order by a single writer, so the
    # artifact bytes do not depend on the worker count.
    with transcripts_path.open("a", encoding="utf-8") as t_sink, records_path.open(
        "a", encoding="utf-8"
    ) as r_sink, ThreadPoolExecutor(max_workers=max(1, config.workers)) as pool:
        futures = [pool.submit(execute, policy, item) for policy, item in tasks]
        for (policy, item), future in zip(tasks, futures):
            try:
                transcript = future.result()
            except (EpisodeError, BackendError) as exc:
                excluded[policy.value] = excluded.get(policy.value, 0) + 1
                _append_failure(out, policy.value, item.item_id, exc)
                continue
            record = _to_record(transcript, item)
            t_sink.write(
                json.dumps(transcript_to_obj(transcript, timestamp=clock()), ensure_ascii=False)
                + "\n"
            )
            t_sink.flush()
            r_sink.write(json.dumps(_record_to_obj(record), ensure_ascii=False) + "\n")
            r_sink.flush()

    records = [_record_from_obj(row) for row in _read_jsonl_file(records_path)]
    transcript_rows = {
        (row["policy"], row["question_id"]): row for row in _read_jsonl_file(transcripts_path)
    }
    transcript_rows.update(prior_transcripts)
    transcripts = [transcript_from_obj(row) for row in transcript_rows.values()]
    return records, transcripts


def _to_record(transcript: DialogueTranscript, item: EvalItem) -> EvalRecord:
    asked = transcript.asked_clarification
    if transcript.policy is Policy.DEFAULT_GPT:
        # The default policy never routes through clarification, but its
        # reply may still be a question; that is its only ranking signal.
        asked = detect_clarification_request(transcript.final_answer_text)
    correct = contains_accuracy(transcript.final_answer_text, item.reference_answers)
    score = (
        transcript.ambiguity_score.logprob_true
        if transcript.ambiguity_score is not None
        else None
    )
    return EvalRecord(
        question_id=item.item_id,
        true_ambiguous=item.true_ambiguous,
        asked_clarification=asked,
        correct=correct,
        policy=transcript.policy.value,
        score=score,
    )


def _record_to_obj(record: EvalRecord) -> dict:
    return {
        "question_id": record.question_id,
        "true_ambiguous": record.true_ambiguous,
        "asked_clarification": record.asked_clarification,
        "correct": record.correct,
        "policy": record.policy,
        "score": record.score,
    }


def _record_from_obj(obj: dict) -> EvalRecord:
    return EvalRecord(
        question_id=obj["question_id"],
        true_ambiguous=obj["true_ambiguous"],
        asked_clarification=obj["asked_clarification"],
        correct=obj["correct"],
        policy=obj["policy"],
        score=obj.get("score"),
    )


def sweep(
    config: RunConfig,
    parameter: str,
    values: Sequence[float],
    backend: Optional[Backend] = None,
) -> dict[float, dict[str, MetricsReport]]:
    """Sweep the penalty or the decision threshold over ``values``.

    The penalty sweep recomputes metrics from recorded outcomes without any
    model queries. The threshold sweep re-runs routing per value (cheap for
    scripted backends, a fresh query pass for live ones), writing each run
    under ``out_dir/tau_<value>``.
    """
    if not values:
        raise ConfigError("sweep values must be non-empty")
    if parameter == "lambda":
        run = _load_or_run(config, backend)
        by_policy: dict[str, dict[float, MetricsReport]] = {}
        for policy in config.policies:
            policy_records = [r for r in run.records if r.policy == policy.value]
            if policy_records:
                by_policy[policy.value] = lambda_sweep(policy_records, values)
        table = {
            value: {policy: by_policy[policy][value] for policy in by_policy}
            for value in values
        }
        csv_text = sweep_table_csv(by_policy, values)
        (config.out_dir / "lambda_sweep.csv").write_text(csv_text, "utf-8")
        return table
    if parameter == "tau":
        out: dict[float, dict[str, MetricsReport]] = {}
        for value in values:
            sub = replace(
                config,
                tau=value,
                out_dir=config.out_dir / f"tau_{value:g}",
            )
            run = run_experiment(sub, backend=backend)
            out[value] = run.reports
        return out
    raise ConfigError(f"unknown sweep parameter {parameter!r} (expected tau or lambda)")


def _load_or_run(config: RunConfig, backend: Optional[Backend]) -> EvalRun:
    records_path = config.out_dir / "records.jsonl"
    if records_path.exists():
        records = [_record_from_obj(row) for row in _read_jsonl_file(records_path)]
        if records:
            return EvalRun(
                config=config.snapshot(),
                records=records,
                transcripts=[],
                reports={},
                detection=None,
                excluded={},
                request_count=0,
                completion_tokens=0,
                wall_clock_seconds=0.0,
                out_dir=config.out_dir,
            )
    return run_experiment(config, backend=backend)


def report(run_dir: str | Path) -> dict[str, Path]:
    """Render the run's tables into ``report/*.csv`` and return their paths.

    Emits per-policy accuracy and adjusted accuracy, per-policy AUROC (with
    one-class inputs marked undefined), ambiguous-only and unambiguous-only
    accuracies, the routing count matrix, and a penalty sweep.
    """
    run_dir = Path(run_dir)
    metrics = json.loads((run_dir / "metrics.json").read_text("utf-8"))
    records = [_record_from_obj(row) for row in _read_jsonl_file(run_dir / "records.jsonl")]
    report_dir = run_dir / "report"
    report_dir.mkdir(exist_ok=True)
    paths: dict[str, Path] = {}

    policies = sorted(metrics.get("policies", {}))

    def emit(name: str, header: list[str], rows: list[list]) -> None:
        path = report_dir / name
        with path.open("w", encoding="utf-8", newline="") as sink:
            writer = csv.writer(sink, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        paths[name] = path

    def fmt(value) -> str:
        return "undefined" if value is None else f"{value:.6f}"

    emit(
        "accuracy.csv",
        ["policy", "n", "accuracy", "adjusted_accuracy", "accuracy_ambiguous", "accuracy_unambiguous"],
        [
            [
                p,
                metrics["policies"][p]["n_records"],
                fmt(metrics["policies"][p]["accuracy"]),
                fmt(metrics["policies"][p]["adjusted_accuracy"]),
                fmt(metrics["policies"][p]["accuracy_ambiguous"]),
                fmt(metrics["policies"][p]["accuracy_unambiguous"]),
            ]
            for p in policies
        ],
    )

    auroc_rows = [[p, fmt(metrics["policies"][p]["auroc"])] for p in policies]
    if metrics.get("detection"):
        auroc_rows.append(["classifier_detection", fmt(metrics["detection"]["auroc"])])
    emit("auroc.csv", ["policy", "auroc"], auroc_rows)

    emit(
        "counts.csv",
        ["policy", "ambiguous_asked", "ambiguous_not_asked", "unambiguous_asked", "unambiguous_not_asked"],
        [
            [p] + [metrics["policies"][p]["counts"][k] for k in (
                "ambiguous_asked", "ambiguous_not_asked", "unambiguous_asked", "unambiguous_not_asked"
            )]
            for p in policies
        ],
    )

    if records:
        by_policy = {
            p: lambda_sweep([r for r in records if r.policy == p], DEFAULT_SWEEP_LAMBDAS)
            for p in policies
            if any(r.policy == p for r in records)
        }
        (report_dir / "lambda_sweep.csv").write_text(
            sweep_table_csv(by_policy, DEFAULT_SWEEP_LAMBDAS), "utf-8"
        )
        paths["lambda_sweep.csv"] = report_dir / "lambda_sweep.csv"

    return paths
