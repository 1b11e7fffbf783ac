from __future__ import annotations

import json
from pathlib import Path

import pytest

from clam.backend import ScriptedBackend, ScriptRule
from clam.corpus import bundled_sample_path
from clam.pipeline import Policy
from clam.prompts import DatasetKind
from clam.runner import (
    ConfigError,
    RunConfig,
    build_backend,
    load_run_config,
    report,
    run_experiment,
    sweep,
)

FIXED_CLOCK = lambda: "1970-01-01T00:00:00Z"


def make_config(tmp_path, **overrides) -> RunConfig:
    defaults = dict(
        dataset_path=bundled_sample_path(),
        dataset_kind=DatasetKind.AMBIG_TRIVIA,
        policies=(Policy.CLAM, Policy.DEFAULT_GPT),
        backend_spec={
            "kind": "scripted",
            "rules_path": str(bundled_sample_path("fixture_rules.json")),
        },
        out_dir=tmp_path / "run",
        detect_sample=None,
        qa_sample=None,
        seed=7,
    )
    defaults.update(overrides)
    return RunConfig(**defaults)


def artifact_bytes(out_dir: Path, names=("transcripts.jsonl", "records.jsonl", "detect_scores.jsonl")):
    return {name: (out_dir / name).read_bytes() for name in names}


def comparable_metrics(out_dir: Path) -> dict:
    obj = json.loads((out_dir / "metrics.json").read_text("utf-8"))
    # Request accounting depends on how many calls this invocation made,
    # which is legitimately smaller for a resumed run.
    obj.pop("request_count", None)
    obj.pop("completion_tokens", None)
    obj["config"].pop("out_dir", None)
    return obj


def test_config_file_round_trip_json(tmp_path):
    config_obj = {
        "dataset": {"path": str(bundled_sample_path()), "kind": "ambig_trivia"},
        "policies": ["clam"],
        "backend": {"kind": "scripted", "rules_path": "rules.json"},
        "classifier": {"tau": -0.25},
        "metrics": {"lambda": 0.9},
        "sampling": {"detect": 10, "qa": 5, "seed": 3},
        "out_dir": "out",
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config_obj), "utf-8")
    config = load_run_config(path)
    assert config.tau == -0.25
    assert config.penalty_lambda == 0.9
    assert config.detect_sample == 10
    assert config.out_dir == (tmp_path / "out").resolve()
    overridden = load_run_config(path, tau=-0.5, seed=11)
    assert overridden.tau == -0.5
    assert overridden.seed == 11


def test_config_file_round_trip_toml(tmp_path):
    toml_text = """
policies = []
out_dir = "out"

[dataset]
path = "corpus.jsonl"
kind = "clariq"

[backend]
kind = "scripted"
rules_path = "rules.json"

[sampling]
detect = 12
seed = 2
"""
    (tmp_path / "corpus.jsonl").write_text("", "utf-8")
    path = tmp_path / "config.toml"
    path.write_text(toml_text, "utf-8")
    config = load_run_config(path)
    assert config.dataset_kind is DatasetKind.CLARIQ
    assert config.detect_sample == 12
    assert config.policies == ()


def test_unknown_backend_kind_rejected():
    with pytest.raises(ConfigError, match="unknown backend kind"):
        build_backend({"kind": "quantum"})


def test_detection_only_dataset_rejects_policies_before_any_call(tmp_path):
    clariq = bundled_sample_path("clariq_sample.tsv")
    probe = ScriptedBackend([ScriptRule("contains", "x", "y")])
    config = make_config(
        tmp_path,
        dataset_path=clariq,
        dataset_kind=DatasetKind.CLARIQ,
        policies=(Policy.CLAM,),
    )
    with pytest.raises(ConfigError, match="detection only"):
        run_experiment(config, backend=probe)
    assert probe.call_count == 0


def test_oversized_subsample_rejected(tmp_path):
    config = make_config(tmp_path, detect_sample=400)
    with pytest.raises(ConfigError, match="exceeds corpus size"):
        run_experiment(config, backend=ScriptedBackend([ScriptRule("contains", "x", "y")]))


def test_end_to_end_reports(tmp_path):
    config = make_config(tmp_path)
    run = run_experiment(config, clock=FIXED_CLOCK)
    clam = run.reports["clam"]
    default = run.reports["default_gpt"]
    assert clam.accuracy_ambiguous == 1.0
    assert default.accuracy_ambiguous == 0.0
    assert clam.accuracy_unambiguous == default.accuracy_unambiguous == 1.0
    assert run.detection["auroc"] == 1.0
    assert run.detection["n"] == 40
    assert (config.out_dir / "metrics.json").exists()
    assert run.excluded == {}
    # Every record has a persisted transcript.
    keys_r = {(r.policy, r.question_id) for r in run.records}
    keys_t = {(t.policy.value, t.question_id) for t in run.transcripts}
    assert keys_r <= keys_t


def test_request_accounting_matches_scripted_call_count(tmp_path):
    config = make_config(tmp_path)
    backend = build_backend(config.backend_spec)
    run = run_experiment(config, backend=backend, clock=FIXED_CLOCK)
    assert run.request_count == backend.call_count


def test_runs_are_byte_identical(tmp_path):
    first = run_experiment(make_config(tmp_path, out_dir=tmp_path / "a"), clock=FIXED_CLOCK)
    second = run_experiment(make_config(tmp_path, out_dir=tmp_path / "b"), clock=FIXED_CLOCK)
    assert artifact_bytes(first.out_dir) == artifact_bytes(second.out_dir)
    assert comparable_metrics(first.out_dir) == comparable_metrics(second.out_dir)


class Bomb:
    """Backend wrapper that dies after a fixed number of calls."""

    def __init__(self, inner, fuse: int):
        self.inner = inner
        self.fuse = fuse
        self.calls = 0

    def complete(self, request):
        self.calls += 1
        if self.calls > self.fuse:
            raise KeyboardInterrupt("simulated crash")
        return self.inner.complete(request)


def test_interrupted_run_resumes_to_identical_artifacts(tmp_path):
    baseline = run_experiment(
        make_config(tmp_path, out_dir=tmp_path / "clean"), clock=FIXED_CLOCK
    )

    config = make_config(tmp_path, out_dir=tmp_path / "crashy")
    with pytest.raises(KeyboardInterrupt):
        run_experiment(
            config, backend=Bomb(build_backend(config.backend_spec), fuse=60), clock=FIXED_CLOCK
        )
    resumed = run_experiment(config, clock=FIXED_CLOCK)

    assert artifact_bytes(resumed.out_dir) == artifact_bytes(baseline.out_dir)
    assert comparable_metrics(resumed.out_dir) == comparable_metrics(baseline.out_dir)


def test_per_question_failures_are_excluded_and_reported(tmp_path):
    # Remove the rules for one pair's ambiguous direct answer so the default
    # policy fails on exactly that question.
    from clam.backend import load_script_rules
    from clam.prompts import QA_PREAMBLE

    rules = load_script_rules(bundled_sample_path("fixture_rules.json"))
    needle = f"{QA_PREAMBLE}\nUser: Where in England was she born?\nBot:"
    pruned = [r for r in rules if r.matcher_value != needle]
    config = make_config(tmp_path, policies=(Policy.DEFAULT_GPT,))
    run = run_experiment(config, backend=ScriptedBackend(pruned), clock=FIXED_CLOCK)
    assert run.excluded == {"default_gpt": 1}
    assert len(run.records) == 39
    failures = (config.out_dir / "failures.jsonl").read_text("utf-8")
    assert "p01:ambiguous" in failures


def test_lambda_sweep_never_requeries(tmp_path):
    config = make_config(tmp_path)
    backend = build_backend(config.backend_spec)
    run_experiment(config, backend=backend, clock=FIXED_CLOCK)
    calls_before = backend.call_count
    table = sweep(config, "lambda", (0.5, 0.8, 1.0), backend=backend)
    assert backend.call_count == calls_before
    for policy, rep in table[1.0].items():
        assert rep.adjusted_accuracy == rep.accuracy
    assert (config.out_dir / "lambda_sweep.csv").exists()


def test_tau_sweep_extremes_reproduce_static_routing(tmp_path):
    config = make_config(tmp_path, policies=(Policy.CLAM,))
    table = sweep(config, "tau", (-1e9, 0.0))
    always = table[-1e9]["clam"].counts
    assert always["ambiguous_asked"] + always["unambiguous_asked"] == 40
    never = table[0.0]["clam"].counts
    assert never["ambiguous_asked"] + never["unambiguous_asked"] == 0


def test_sweep_rejects_bad_parameters(tmp_path):
    config = make_config(tmp_path)
    with pytest.raises(ConfigError):
        sweep(config, "gamma", (1.0,))
    with pytest.raises(ConfigError):
        sweep(config, "lambda", ())


def test_report_renders_tables(tmp_path):
    config = make_config(tmp_path, policies=tuple(Policy))
    run_experiment(config, clock=FIXED_CLOCK)
    paths = report(config.out_dir)
    accuracy = paths["accuracy.csv"].read_text("utf-8").splitlines()
    assert accuracy[0].startswith("policy,n,accuracy,adjusted_accuracy")
    assert len(accuracy) == 5
    counts = paths["counts.csv"].read_text("utf-8")
    assert "force_clarify,20,0,20,0" in counts
    auroc_table = paths["auroc.csv"].read_text("utf-8")
    assert "classifier_detection,1.000000" in auroc_table
    sweep_table = paths["lambda_sweep.csv"].read_text("utf-8").splitlines()
    assert sweep_table[0] == "policy,0.5,0.6,0.7,0.8,0.9,1"


def test_report_matches_frozen_golden(tmp_path):
    # Frozen after the first verified full-policy run on the bundled corpus.
    config = make_config(tmp_path, policies=tuple(Policy))
    run_experiment(config, clock=FIXED_CLOCK)
    paths = report(config.out_dir)
    golden_dir = Path(__file__).parent / "fixtures" / "golden_report"
    for name, path in paths.items():
        assert path.read_bytes() == (golden_dir / name).read_bytes(), name


def test_worker_pool_keeps_artifacts_deterministic(tmp_path):
    serial = run_experiment(
        make_config(tmp_path, out_dir=tmp_path / "serial", workers=1), clock=FIXED_CLOCK
    )
    pooled = run_experiment(
        make_config(tmp_path, out_dir=tmp_path / "pooled", workers=4), clock=FIXED_CLOCK
    )
    assert artifact_bytes(serial.out_dir) == artifact_bytes(pooled.out_dir)
    assert serial.reports == pooled.reports


def test_report_marks_undefined_auroc(tmp_path):
    run_dir = tmp_path / "run"
    run_dir.mkdir()
    metrics = {
        "policies": {
            "clam": {
                "n_records": 2,
                "accuracy": 1.0,
                "adjusted_accuracy": 1.0,
                "accuracy_ambiguous": 1.0,
                "accuracy_unambiguous": None,
                "auroc": None,
                "counts": {
                    "ambiguous_asked": 2,
                    "ambiguous_not_asked": 0,
                    "unambiguous_asked": 0,
                    "unambiguous_not_asked": 0,
                },
            }
        }
    }
    (run_dir / "metrics.json").write_text(json.dumps(metrics), "utf-8")
    paths = report(run_dir)
    content = paths["auroc.csv"].read_text("utf-8")
    assert "clam,undefined" in content
    accuracy = paths["accuracy.csv"].read_text("utf-8")
    assert "undefined" in accuracy
