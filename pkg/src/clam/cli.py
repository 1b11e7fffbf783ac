"""Command-line entry points: validate, run, sweep, report, serve."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .corpus import CorpusError, load_clariq, load_claqua, load_pairs
from .prompts import DatasetKind
from .runner import ConfigError, load_run_config
from .runner import report as render_report
from .runner import run_experiment
from .runner import sweep as run_sweep

KIND_CHOICES = [k.value for k in DatasetKind]


@click.group()
def main():
    """Selective clarification for ambiguous question answering."""


@main.command()
@click.argument("path", type=click.Path(exists=True, path_type=Path))
@click.option(
    "--kind",
    type=click.Choice(KIND_CHOICES),
    default=None,
    help="Corpus kind; inferred from the file extension when omitted.",
)
def validate(path: Path, kind: str | None):
    """Validate a corpus file and report what it contains."""
    if kind is None:
        kind = DatasetKind.CLARIQ.value if path.suffix == ".tsv" else DatasetKind.AMBIG_TRIVIA.value
    try:
        if kind == DatasetKind.AMBIG_TRIVIA.value:
            pairs = load_pairs(path)
            click.echo(f"ok: {len(pairs)} question pairs")
        elif kind == DatasetKind.CLARIQ.value:
            items = load_clariq(path)
            ambiguous = sum(i.ambiguous for i in items)
            click.echo(f"ok: {len(items)} queries ({ambiguous} ambiguous)")
        else:
            variant = "single" if kind == DatasetKind.CLAQUA_SINGLE.value else "multi"
            items = load_claqua(path, variant)
            ambiguous = sum(i.ambiguous for i in items)
            click.echo(f"ok: {len(items)} questions ({ambiguous} ambiguous)")
    except CorpusError as exc:
        click.echo(f"invalid: {exc}", err=True)
        sys.exit(1)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--tau", type=float, default=None, help="Override the decision threshold.")
@click.option("--lambda", "penalty_lambda", type=float, default=None, help="Override the penalty.")
@click.option("--seed", type=int, default=None, help="Override the subsampling seed.")
@click.option("--out", type=click.Path(path_type=Path), default=None, help="Override the output directory.")
def run(config_path: Path, tau, penalty_lambda, seed, out):
    """Run the experiment described by a JSON or TOML config file."""
    overrides = {}
    if tau is not None:
        overrides["tau"] = tau
    if penalty_lambda is not None:
        overrides["penalty_lambda"] = penalty_lambda
    if seed is not None:
        overrides["seed"] = seed
    if out is not None:
        overrides["out_dir"] = out.resolve()
    try:
        config = load_run_config(config_path, **overrides)
        result = run_experiment(config)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"run complete: {result.out_dir}")
    click.echo(f"  requests: {result.request_count}, completion tokens: {result.completion_tokens}")
    if result.detection:
        click.echo(f"  detection AUROC: {result.detection.get('auroc')}")
    for policy, rep in sorted(result.reports.items()):
        click.echo(
            f"  {policy}: accuracy {rep.accuracy:.3f}, adjusted {rep.adjusted_accuracy:.3f}"
        )
    if result.excluded:
        click.echo(f"  excluded: {result.excluded}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--param", type=click.Choice(["tau", "lambda"]), required=True)
@click.option("--values", required=True, help="Comma-separated sweep values, e.g. 0.5,0.6,0.7")
def sweep(config_path: Path, param: str, values: str):
    """Sweep the penalty or the threshold over a list of values."""
    try:
        parsed = [float(v) for v in values.split(",") if v.strip()]
    except ValueError:
        click.echo(f"could not parse values {values!r}", err=True)
        sys.exit(1)
    try:
        config = load_run_config(config_path)
        table = run_sweep(config, param, parsed)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(1)
    for value in parsed:
        cells = ", ".join(
            f"{policy}={rep.adjusted_accuracy:.3f}" for policy, rep in sorted(table[value].items())
        )
        click.echo(f"{param}={value:g}: {cells}")


@main.command("report")
@click.argument("run_dir", type=click.Path(exists=True, path_type=Path))
def report_cmd(run_dir: Path):
    """Render a finished run's tables into run_dir/report/*.csv."""
    paths = render_report(run_dir)
    for name in sorted(paths):
        click.echo(f"wrote {paths[name]}")


@main.command()
@click.option("--port", type=int, default=8000)
@click.option("--host", default="127.0.0.1")
@click.option(
    "--backend",
    "backend_spec",
    required=True,
    help='Backend spec: "scripted:RULES.json" or "openai:MODEL".',
)
@click.option("--tau", type=float, default=None)
@click.option("--dataset", type=click.Choice(KIND_CHOICES), default=DatasetKind.AMBIG_TRIVIA.value)
@click.option("--snapshot", type=click.Path(path_type=Path), default=None,
              help="Append finished dialogues to this JSONL file.")
def serve(port: int, host: str, backend_spec: str, tau, dataset: str, snapshot):
    """Serve the interactive clarification session API over HTTP."""
    import uvicorn

    from .classifier import DEFAULT_TAU
    from .runner import build_backend
    from .service import ServiceConfig, create_app

    kind, _, value = backend_spec.partition(":")
    if kind == "scripted":
        spec = {"kind": "scripted", "rules_path": value}
    elif kind == "openai":
        spec = {"kind": "openai", "model": value}
    else:
        click.echo(f"unknown backend spec {backend_spec!r}", err=True)
        sys.exit(1)

    config = ServiceConfig(
        backend=build_backend(spec),
        dataset=DatasetKind(dataset),
        tau=DEFAULT_TAU if tau is None else tau,
        backend_name=backend_spec,
        snapshot_path=snapshot,
    )
    uvicorn.run(create_app(config), host=host, port=port)


if __name__ == "__main__":
    main()
