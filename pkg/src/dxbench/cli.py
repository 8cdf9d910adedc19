"""Command-line entry point.

Exit codes: 0 success, 1 validation/usage error, 2 transport error,
3 partial-results abort. Every stochastic subcommand requires --seed (no
hidden entropy) and every run writes a config snapshot next to its output.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from . import experiments
from .annotation import annotate_evidence, save_annotated
from .corpus import MASKED_FILE, load_annotated_corpus, load_corpus, save_corpus
from .datamodel import load_criteria, load_notes, load_split, save_split, split_dataset, validate_corpus
from .errors import (
    DxBenchError,
    PartialResultsError,
    SchemaError,
    TransportError,
)
from .gateway import EndpointConfig, HttpChatClient, HttpEmbedder, StubEmbedder
from .masking import (
    MaskedNote,
    build_balanced_corpus,
    corpus_split_items,
    mask_evidence,
    save_masked,
)
from .metrics.bootstrap import MetricValue
from .ndjson import write_records
from .review import ReviewStore, create_app
from .review.service import load_reviewers
from .taskgen import Subtask, export_training_file, load_templates, render_demonstration


def _write_snapshot(ctx: click.Context, output: Path, extra: dict | None = None) -> None:
    params = {k: (str(v) if isinstance(v, Path) else v) for k, v in ctx.params.items()}
    snapshot = {"command": ctx.command.name, "params": params}
    if extra:
        snapshot.update(extra)
    if output.is_dir():
        path = output / "config.snapshot"
    else:
        path = output.with_name(output.name + ".config.json")
    path.write_text(json.dumps(snapshot, indent=2, default=str) + "\n", "utf-8")


def _chat_client(endpoint: str | None, model: str | None, api_key: str | None,
                 cache_dir: str | None, max_inflight: int) -> HttpChatClient:
    config = EndpointConfig.from_env(url=endpoint, model_id=model, api_key=api_key)
    return HttpChatClient(config, cache_dir=cache_dir, max_inflight=max_inflight)


def _parse_ratios(text: str) -> tuple[str, str, str]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise SchemaError(f"--ratios expects three comma-separated values, got {text!r}")
    return parts[0], parts[1], parts[2]


def _parse_subtasks(text: str) -> tuple[Subtask, ...]:
    return tuple(Subtask.parse(part) for part in text.split(",") if part.strip())


@click.group(name="dxbench")
def cli() -> None:
    """Diagnosis-benchmark construction, evaluation, and review tooling."""


@cli.command("criteria-validate")
@click.option("--criteria", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Criteria file to validate.")
def criteria_validate(criteria: str) -> None:
    """Validate a criteria file against the schema and selection rules."""
    criteria_set = load_criteria(criteria)
    click.echo(
        f"ok: {len(criteria_set.diseases)} diseases, {len(criteria_set.criteria)} criteria "
        f"(version {criteria_set.version})"
    )


@cli.command("annotate")
@click.option("--criteria", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Criteria file.")
@click.option("--notes", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Notes file to annotate.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Corpus directory to write.")
@click.option("--endpoint", default=None, help="Chat-completions base URL.")
@click.option("--model", default=None, help="Model id.")
@click.option("--api-key", default=None, help="API key (overrides environment).")
@click.option("--cache-dir", default=None, type=click.Path(file_okay=False),
              help="Response cache directory.")
@click.option("--max-inflight", default=4, show_default=True,
              help="Maximum concurrent requests.")
@click.pass_context
def annotate(ctx: click.Context, criteria: str, notes: str, out_dir: str,
             endpoint: str | None, model: str | None, api_key: str | None,
             cache_dir: str | None, max_inflight: int) -> None:
    """Annotate evidence spans over a notes file via the agent protocol."""
    criteria_set = load_criteria(criteria)
    note_records = load_notes(notes)
    report = validate_corpus(note_records, criteria_set)
    if not report.ok:
        for issue in report.issues:
            click.echo(f"invalid: {issue.note_id}: {issue.problem}: {issue.detail}", err=True)
        raise SchemaError(f"corpus failed validation with {len(report.issues)} issues")
    client = _chat_client(endpoint, model, api_key, cache_dir, max_inflight)

    def annotate_one(note):
        return annotate_evidence(note, criteria_set, client,
                                 model_id=client.endpoint.model_id)

    with ThreadPoolExecutor(max_workers=max(1, max_inflight)) as pool:
        annotated = list(pool.map(annotate_one, note_records))
    out = Path(out_dir)
    save_corpus(annotated, [], out)
    _write_snapshot(ctx, out)
    complete = sum(1 for a in annotated if a.is_complete)
    click.echo(f"annotated {len(annotated)} notes ({complete} evidence_complete) -> {out}")


@cli.command("mask")
@click.option("--criteria", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Criteria file.")
@click.option("--corpus", required=True, type=click.Path(exists=True, file_okay=False),
              help="Corpus directory holding annotated notes.")
@click.option("--k", default=1, show_default=True, help="Evidence spans to mask per note.")
@click.option("--seed", required=True, type=int, help="Sampling seed.")
@click.pass_context
def mask(ctx: click.Context, criteria: str, corpus: str, k: int, seed: int) -> None:
    """Mask every eligible evidence-complete note in the corpus."""
    criteria_set = load_criteria(criteria)
    annotated = load_annotated_corpus(corpus)
    masked = []
    skipped = 0
    for note in annotated:
        if not note.is_complete or len(note.spans) < k + 1:
            skipped += 1
            continue
        masked.append(mask_evidence(note, criteria_set, k=k, seed=seed))
    out = Path(corpus) / MASKED_FILE
    save_masked(masked, out)
    _write_snapshot(ctx, out)
    click.echo(f"masked {len(masked)} notes ({skipped} skipped) -> {out}")


@cli.command("balance")
@click.option("--criteria", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Criteria file.")
@click.option("--corpus", required=True, type=click.Path(exists=True, file_okay=False),
              help="Corpus directory holding annotated notes.")
@click.option("--k", default=1, show_default=True, help="Evidence spans to mask per note.")
@click.option("--seed", required=True, type=int, help="Selection seed.")
@click.pass_context
def balance(ctx: click.Context, criteria: str, corpus: str, k: int, seed: int) -> None:
    """Replace a seeded half of each disease's notes with masked variants."""
    criteria_set = load_criteria(criteria)
    annotated = load_annotated_corpus(corpus)
    complete = [a for a in annotated if a.is_complete]
    items, warnings = build_balanced_corpus(complete, criteria_set, seed=seed, k=k)
    for warning in warnings:
        click.echo(f"warning: {warning}", err=True)
    masked = [item for item in items if isinstance(item, MaskedNote)]
    out = Path(corpus) / MASKED_FILE
    save_masked(masked, out)
    _write_snapshot(ctx, out)
    click.echo(f"balanced corpus: {len(items) - len(masked)} complete + {len(masked)} masked")


@cli.command("split")
@click.option("--criteria", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Criteria file.")
@click.option("--corpus", required=True, type=click.Path(exists=True, file_okay=False),
              help="Corpus directory.")
@click.option("--ratios", default="0.7,0.1,0.2", show_default=True,
              help="train,validation,test ratios (rationals).")
@click.option("--seed", required=True, type=int, help="Shuffle seed.")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Split manifest to write.")
@click.option("--allow-unreviewed", is_flag=True,
              help="Include pending masked notes in the split.")
@click.pass_context
def split(ctx: click.Context, criteria: str, corpus: str, ratios: str, seed: int,
          out: str, allow_unreviewed: bool) -> None:
    """Stratified train/validation/test split of the corpus."""
    load_criteria(criteria)
    items = load_corpus(corpus, allow_unreviewed=allow_unreviewed)
    result = split_dataset(corpus_split_items(items), _parse_ratios(ratios), seed)
    for warning in result.warnings:
        click.echo(f"warning: {warning}", err=True)
    save_split(result, out)
    _write_snapshot(ctx, Path(out))
    click.echo(f"split {sum(result.sizes)} notes -> {result.sizes} ({out})")


@cli.command("taskgen")
@click.option("--criteria", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Criteria file.")
@click.option("--corpus", required=True, type=click.Path(exists=True, file_okay=False),
              help="Corpus directory.")
@click.option("--templates", default=None, type=click.Path(file_okay=False),
              help="Template directory overriding the defaults.")
@click.option("--subtasks", default="DD,DE,UR,UE", show_default=True,
              help="Comma-separated subtasks to render.")
@click.option("--split", "split_manifest", default=None, type=click.Path(dir_okay=False),
              help="Restrict to one subset of a split manifest.")
@click.option("--subset", default="train", show_default=True,
              type=click.Choice(["train", "validation", "test"]),
              help="Which subset of --split to render.")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Training file to write.")
@click.option("--allow-unreviewed", is_flag=True,
              help="Include pending masked notes.")
@click.pass_context
def taskgen(ctx: click.Context, criteria: str, corpus: str, templates: str | None,
            subtasks: str, split_manifest: str | None, subset: str, out: str,
            allow_unreviewed: bool) -> None:
    """Render instruction demonstrations into a fine-tuning file."""
    criteria_set = load_criteria(criteria)
    items = load_corpus(corpus, allow_unreviewed=allow_unreviewed)
    if split_manifest:
        manifest = load_split(split_manifest)
        wanted = set(getattr(manifest, subset))
        items = [i for i in items
                 if (i.masked_note_id if hasattr(i, "masked_note_id") else i.note.note_id)
                 in wanted]
    template_set = load_templates(templates)
    selected = _parse_subtasks(subtasks)
    demos = [
        render_demonstration(item, subtask, template_set, criteria_set)
        for item in items
        for subtask in selected
    ]
    count = export_training_file(demos, out)
    _write_snapshot(ctx, Path(out))
    click.echo(f"wrote {count} demonstrations -> {out}")


@cli.command("eval")
@click.option("--criteria", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Criteria file.")
@click.option("--corpus", required=True, type=click.Path(exists=True, file_okay=False),
              help="Corpus directory.")
@click.option("--templates", default=None, type=click.Path(file_okay=False),
              help="Template directory overriding the defaults.")
@click.option("--endpoint", default=None, help="Chat-completions base URL.")
@click.option("--model", default=None, help="Model id.")
@click.option("--api-key", default=None, help="API key (overrides environment).")
@click.option("--subtasks", default="DD,DE,UR,UE", show_default=True,
              help="Comma-separated subtasks to evaluate.")
@click.option("--matcher-threshold", default=0.7, show_default=True,
              help="Explanation-correctness similarity threshold.")
@click.option("--bootstrap-iters", default=200, show_default=True,
              help="Bootstrap iterations for confidence intervals.")
@click.option("--seed", required=True, type=int, help="Bootstrap seed.")
@click.option("--max-inflight", default=4, show_default=True,
              help="Maximum concurrent requests.")
@click.option("--allow-unreviewed", is_flag=True,
              help="Evaluate pending masked notes.")
@click.option("--cache-dir", default=None, type=click.Path(file_okay=False),
              help="Response cache directory (makes runs resumable).")
@click.option("--run-id", required=True, help="Run identifier (output subdirectory).")
@click.option("--out-dir", required=True, type=click.Path(file_okay=False),
              help="Directory for run outputs.")
@click.option("--embed-endpoint", default=None,
              help="Embeddings base URL; defaults to the offline stub embedder.")
@click.option("--embed-model", default=None, help="Embedding model id.")
@click.option("--embed-dimension", default=256, show_default=True,
              help="Embedding dimensionality.")
def eval_command(criteria: str, corpus: str, templates: str | None, endpoint: str | None,
                 model: str | None, api_key: str | None, subtasks: str,
                 matcher_threshold: float, bootstrap_iters: int, seed: int,
                 max_inflight: int, allow_unreviewed: bool, cache_dir: str | None,
                 run_id: str, out_dir: str, embed_endpoint: str | None,
                 embed_model: str | None, embed_dimension: int) -> None:
    """Run the full evaluation over a corpus and emit metric reports."""
    criteria_set = load_criteria(criteria)
    items = load_corpus(corpus, allow_unreviewed=allow_unreviewed)
    client = _chat_client(endpoint, model, api_key, cache_dir, max_inflight)
    if embed_endpoint:
        embed_config = EndpointConfig.from_env(url=embed_endpoint,
                                               model_id=embed_model or "embedder",
                                               api_key=api_key)
        embedder = HttpEmbedder(embed_config, dimension=embed_dimension)
    else:
        embedder = StubEmbedder(dimension=embed_dimension, seed=seed)
    config = experiments.RunConfig(
        run_id=run_id,
        output_dir=out_dir,
        subtasks=_parse_subtasks(subtasks),
        model_id=client.endpoint.model_id,
        endpoint_url=client.endpoint.url,
        template_dir=templates,
        matcher_threshold=matcher_threshold,
        bootstrap_iterations=bootstrap_iters,
        seed=seed,
        max_inflight=max_inflight,
        allow_unreviewed=allow_unreviewed,
    )
    reports = experiments.run_evaluation(config, items, criteria_set, client, embedder)
    for report in reports:
        for value in report.metrics:
            click.echo(
                f"{report.subtask:>2} {value.name:<22} {value.mean:.4f} "
                f"[{value.ci_low:.4f}, {value.ci_high:.4f}]  n={value.n}"
            )
    click.echo(f"run {run_id} -> {Path(out_dir) / run_id}")


@cli.command("probe")
@click.option("--criteria", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Criteria file.")
@click.option("--corpus", required=True, type=click.Path(exists=True, file_okay=False),
              help="Corpus directory.")
@click.option("--endpoint", default=None, help="Chat-completions base URL.")
@click.option("--model", default=None, help="Model id.")
@click.option("--api-key", default=None, help="API key (overrides environment).")
@click.option("--cache-dir", default=None, type=click.Path(file_okay=False),
              help="Response cache directory.")
@click.option("--max-inflight", default=4, show_default=True,
              help="Maximum concurrent requests.")
@click.option("--allow-unreviewed", is_flag=True, help="Probe pending masked notes.")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Verdicts file to write.")
@click.pass_context
def probe(ctx: click.Context, criteria: str, corpus: str, endpoint: str | None,
          model: str | None, api_key: str | None, cache_dir: str | None,
          max_inflight: int, allow_unreviewed: bool, out: str) -> None:
    """Zero-shot sufficiency probe with ground-truth diagnosis and criteria."""
    criteria_set = load_criteria(criteria)
    items = load_corpus(corpus, allow_unreviewed=allow_unreviewed)
    client = _chat_client(endpoint, model, api_key, cache_dir, max_inflight)

    def probe_one(item):
        return experiments.sufficiency_probe(item, criteria_set, client,
                                             model_id=client.endpoint.model_id)

    with ThreadPoolExecutor(max_workers=max(1, max_inflight)) as pool:
        verdicts = list(pool.map(probe_one, items))
    write_records(
        out,
        (
            {"note_id": v.note_id, "verdict": v.verdict, "model_rationale": v.model_rationale}
            for v in verdicts
        ),
    )
    _write_snapshot(ctx, Path(out))
    truth = {
        (i.masked_note_id if hasattr(i, "masked_note_id") else i.note.note_id):
        ("insufficient" if hasattr(i, "masked_note_id") else "sufficient")
        for i in items
    }
    correct = sum(1 for v in verdicts if v.verdict == truth[v.note_id])
    click.echo(f"probe: {correct}/{len(verdicts)} verdicts correct -> {out}")


def _ablate(ctx: click.Context, criteria: str, corpus: str, fraction: str, seed: int,
            out: str, allow_unreviewed: bool, reducer) -> None:
    load_criteria(criteria)
    items = load_corpus(corpus, allow_unreviewed=allow_unreviewed)
    labels = corpus_split_items(items)
    selected = reducer(labels, fraction, seed)
    document = {
        "fraction": str(fraction),
        "seed": seed,
        "note_ids": [s.note_id for s in selected],
    }
    Path(out).write_text(json.dumps(document, indent=2) + "\n", "utf-8")
    _write_snapshot(ctx, Path(out))
    click.echo(
        f"{ctx.command.name}: {len(selected)} records over "
        f"{len(set(s.note_id for s in selected))} distinct notes -> {out}"
    )


@cli.command("ablate-size")
@click.option("--criteria", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Criteria file.")
@click.option("--corpus", required=True, type=click.Path(exists=True, file_okay=False),
              help="Corpus directory.")
@click.option("--fraction", required=True, help="Fraction of notes to keep (0, 1].")
@click.option("--seed", required=True, type=int, help="Sampling seed.")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Subsample manifest to write.")
@click.option("--allow-unreviewed", is_flag=True, help="Include pending masked notes.")
@click.pass_context
def ablate_size(ctx: click.Context, criteria: str, corpus: str, fraction: str,
                seed: int, out: str, allow_unreviewed: bool) -> None:
    """Stratified training-set subsample for the data-size ablation."""
    _ablate(ctx, criteria, corpus, fraction, seed, out, allow_unreviewed,
            experiments.subsample_by_size)


@cli.command("ablate-diversity")
@click.option("--criteria", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Criteria file.")
@click.option("--corpus", required=True, type=click.Path(exists=True, file_okay=False),
              help="Corpus directory.")
@click.option("--fraction", required=True, help="Fraction of distinct notes to keep (0, 1).")
@click.option("--seed", required=True, type=int, help="Sampling seed.")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Duplication manifest to write.")
@click.option("--allow-unreviewed", is_flag=True, help="Include pending masked notes.")
@click.pass_context
def ablate_diversity(ctx: click.Context, criteria: str, corpus: str, fraction: str,
                     seed: int, out: str, allow_unreviewed: bool) -> None:
    """Reduce distinct notes, duplicating the rest to keep the size constant."""
    _ablate(ctx, criteria, corpus, fraction, seed, out, allow_unreviewed,
            experiments.reduce_diversity)


@cli.command("report")
@click.option("--metrics", "metrics_files", required=True, multiple=True,
              type=click.Path(exists=True, dir_okay=False),
              help="metrics.report file(s) from evaluation runs.")
@click.option("--format", "fmt", default="tabular", show_default=True,
              type=click.Choice(["structured", "tabular"]), help="Output format.")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Report file to write.")
def report(metrics_files: tuple[str, ...], fmt: str, out: str) -> None:
    """Merge metric reports into one structured or tabular file."""
    reports = []
    for path in metrics_files:
        for entry in json.loads(Path(path).read_text("utf-8")):
            reports.append(
                experiments.MetricReport(
                    run_id=str(entry["run_id"]),
                    subtask=str(entry["subtask"]),
                    metrics=tuple(MetricValue.from_dict(m) for m in entry["metrics"]),
                    matcher_config=dict(entry.get("matcher_config", {})),
                    seed=int(entry.get("seed", 0)),
                )
            )
    experiments.emit_report(reports, out, format=fmt)
    click.echo(f"wrote {fmt} report -> {out}")


@cli.command("serve")
@click.option("--port", default=8400, show_default=True, help="Listen port.")
@click.option("--host", default="127.0.0.1", show_default=True, help="Bind address.")
@click.option("--event-log", required=True, type=click.Path(dir_okay=False),
              help="Append-only review event log (replayed at startup).")
@click.option("--reviewers-file", default=None, type=click.Path(exists=True, dir_okay=False),
              help="JSON file mapping reviewer tokens to reviewer ids.")
@click.option("--include-model-identity", is_flag=True,
              help="Expose model identity in grading payloads (blinded by default).")
def serve(port: int, host: str, event_log: str, reviewers_file: str | None,
          include_model_identity: bool) -> None:
    """Start the expert review service."""
    import uvicorn

    store = ReviewStore(log_path=event_log)
    reviewers = load_reviewers(reviewers_file) if reviewers_file else None
    app = create_app(store, reviewers=reviewers,
                     include_model_identity=include_model_identity)
    click.echo(f"review service on http://{host}:{port} (event log: {event_log})")
    uvicorn.run(app, host=host, port=port, log_level="info")


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.UsageError as exc:
        exc.show()
        return 1
    except PartialResultsError as exc:
        click.echo(f"error: {exc}", err=True)
        if exc.manifest_path:
            click.echo(f"partial-results manifest: {exc.manifest_path}", err=True)
        return 3
    except TransportError as exc:
        click.echo(f"transport error: {exc}", err=True)
        return 2
    except (SchemaError, DxBenchError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
