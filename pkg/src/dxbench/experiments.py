"""Evaluation runs, the zero-shot sufficiency probe, and data ablations.

A run renders one prompt per (note, enabled subtask), sends them through
the gateway (bounded parallelism, cached responses skipped), parses the
answers, persists everything under the run directory, and then computes
the full metric suite with bootstrap CIs. Runs are resumable: a re-run
with a warm cache performs zero network calls and reproduces the same
report.
"""

from __future__ import annotations

import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .datamodel import CriteriaSet, SplitItem
from .errors import MetricUndefinedError, PartialResultsError, SchemaError, TransportError
from .gateway import ChatClient, ChatResponse, Embedder, user_request
from .masking import CorpusItem, MaskedNote
from .metrics import (
    ExplanationMatcher,
    MetricValue,
    accuracy_eu,
    bertscore_greedy,
    bootstrap_ci,
    diagnostic_accuracy,
    f1_eu,
    meteor,
    sentence_similarity,
)
from .metrics.classification import INSUFFICIENT, SUFFICIENT
from .metrics.explanations import greedy_matches
from .taskgen import (
    Demonstration,
    ParsedPrediction,
    Subtask,
    build_prompt,
    load_templates,
    parse_prediction,
    render_demonstration,
    save_predictions,
)

log = logging.getLogger(__name__)

ALL_SUBTASKS = tuple(Subtask)

FAILURE_ABORT_RATIO = 0.1

CONFIG_SNAPSHOT = "config.snapshot"
PREDICTIONS_FILE = "predictions.records"
METRICS_FILE = "metrics.report"
LOG_FILE = "log"
PARTIAL_MANIFEST = "partial.manifest"


@dataclass
class RunConfig:
    run_id: str
    output_dir: str | Path
    subtasks: tuple[Subtask, ...] = ALL_SUBTASKS
    model_id: str = "default"
    endpoint_url: str | None = None
    template_dir: str | Path | None = None
    matcher_threshold: float = 0.7
    bootstrap_iterations: int = 200
    seed: int = 0
    max_inflight: int = 4
    allow_unreviewed: bool = False
    max_tokens: int = 2048
    extra: dict = field(default_factory=dict)

    def snapshot(self) -> dict:
        return {
            "run_id": self.run_id,
            "subtasks": [s.value for s in self.subtasks],
            "model_id": self.model_id,
            "endpoint_url": self.endpoint_url,
            "template_dir": str(self.template_dir) if self.template_dir else None,
            "matcher_threshold": self.matcher_threshold,
            "bootstrap_iterations": self.bootstrap_iterations,
            "seed": self.seed,
            "max_inflight": self.max_inflight,
            "allow_unreviewed": self.allow_unreviewed,
            "max_tokens": self.max_tokens,
            **self.extra,
        }


@dataclass(frozen=True)
class MetricReport:
    run_id: str
    subtask: str
    metrics: tuple[MetricValue, ...]
    matcher_config: dict
    seed: int

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "subtask": self.subtask,
            "metrics": [m.to_dict() for m in self.metrics],
            "matcher_config": self.matcher_config,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class SufficiencyVerdict:
    note_id: str
    verdict: str  # "sufficient" | "insufficient" | "parse_failed"
    model_rationale: str


def _item_id(item: CorpusItem) -> str:
    return item.masked_note_id if isinstance(item, MaskedNote) else item.note.note_id


def _is_uncertain(item: CorpusItem) -> bool:
    return isinstance(item, MaskedNote)


def _write_log(run_dir: Path, lines: list[str]) -> None:
    (run_dir / LOG_FILE).write_text("\n".join(lines) + ("\n" if lines else ""), "utf-8")


def _collect_responses(
    demos: Sequence[Demonstration],
    client: ChatClient,
    config: RunConfig,
    run_dir: Path,
    log_lines: list[str],
) -> dict[tuple[str, str], ChatResponse]:
    """Fan prompts out through the client; abort with a partial-results
    manifest when more than FAILURE_ABORT_RATIO of them fail in transport."""

    def ask(demo: Demonstration) -> tuple[Demonstration, ChatResponse | TransportError]:
        request = user_request(config.model_id, build_prompt(demo),
                              max_tokens=config.max_tokens)
        try:
            return demo, client.complete(request)
        except TransportError as exc:
            return demo, exc

    with ThreadPoolExecutor(max_workers=max(1, config.max_inflight)) as pool:
        outcomes = list(pool.map(ask, demos))

    responses: dict[tuple[str, str], ChatResponse] = {}
    failures: list[tuple[Demonstration, TransportError]] = []
    for demo, outcome in outcomes:
        if isinstance(outcome, TransportError):
            failures.append((demo, outcome))
            log_lines.append(f"transport-failure {demo.note_id} {demo.subtask.value}: {outcome}")
        else:
            responses[(demo.note_id, demo.subtask.value)] = outcome

    if failures and not responses:
        _write_log(run_dir, log_lines)
        raise TransportError(f"endpoint unreachable: {failures[0][1]}",
                             status=failures[0][1].status)
    ratio = len(failures) / len(demos) if demos else 0.0
    if ratio > FAILURE_ABORT_RATIO:
        manifest = {
            "run_id": config.run_id,
            "completed": sorted(f"{k[0]}:{k[1]}" for k in responses),
            "failed": sorted(f"{d.note_id}:{d.subtask.value}" for d, _ in failures),
            "failure_ratio": ratio,
        }
        manifest_path = run_dir / PARTIAL_MANIFEST
        manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", "utf-8")
        _write_log(run_dir, log_lines)
        raise PartialResultsError(
            f"aborted: {len(failures)}/{len(demos)} prompts failed "
            f"({ratio:.0%} > {FAILURE_ABORT_RATIO:.0%})",
            manifest_path=str(manifest_path),
        )
    return responses


def _metric(records, fn, name, config: RunConfig, offset: int) -> MetricValue | None:
    """One bootstrapped metric; None when it is undefined on this corpus
    (e.g. zero uncertainty cases), which the caller logs and skips."""
    try:
        # Distinct per-metric seeds keep the bootstrap streams independent.
        return bootstrap_ci(records, fn, name=name,
                            iterations=config.bootstrap_iterations,
                            seed=config.seed + offset)
    except MetricUndefinedError as exc:
        log.warning("metric %s skipped: %s", name, exc)
        return None


def _score_subtask(
    subtask: Subtask,
    demos: dict[str, Demonstration],
    preds: dict[str, ParsedPrediction],
    items: dict[str, CorpusItem],
    matcher: ExplanationMatcher,
    embedder: Embedder | None,
    config: RunConfig,
) -> list[MetricValue | None]:
    ids = sorted(demos)
    if subtask is Subtask.DISEASE_DIAGNOSIS:
        records = [(preds[i].diagnosis, demos[i].output) for i in ids]
        return [
            _metric(records, lambda rs: diagnostic_accuracy(
                {str(k): p for k, (p, _) in enumerate(rs)},
                {str(k): r for k, (_, r) in enumerate(rs)},
            ), "diagnostic_accuracy", config, 1)
        ]

    if subtask is Subtask.UNCERTAINTY_RECOGNITION:
        records = [
            (preds[i].uncertainty_label, INSUFFICIENT if _is_uncertain(items[i]) else SUFFICIENT)
            for i in ids
        ]

        def as_maps(rs):
            return (
                {str(k): p for k, (p, _) in enumerate(rs)},
                {str(k): r for k, (_, r) in enumerate(rs)},
            )

        return [
            _metric(records, lambda rs: accuracy_eu(*as_maps(rs)), "accuracy_eu", config, 2),
            _metric(records, lambda rs: f1_eu(*as_maps(rs)).precision, "precision_eu", config, 3),
            _metric(records, lambda rs: f1_eu(*as_maps(rs)).recall, "recall_eu", config, 4),
            _metric(records, lambda rs: f1_eu(*as_maps(rs)).f1, "f1_eu", config, 5),
        ]

    if subtask is Subtask.DIAGNOSTIC_EXPLANATION:
        # Matching is deterministic per note, so precompute (matched, total,
        # text scores) once and let the bootstrap re-aggregate resamples.
        records = []
        for i in ids:
            ref_list = list(parse_prediction(demos[i].output, subtask).explanations or ())
            pred_list = list(preds[i].explanations or ())
            matched = len(greedy_matches(pred_list, ref_list, matcher.similarity,
                                         matcher.threshold))
            pred_text = "; ".join(pred_list) if pred_list else preds[i].raw
            ref_text = "; ".join(ref_list)
            entry = {
                "matched": matched,
                "total": len(ref_list),
                "meteor": meteor(pred_text, ref_text),
            }
            if embedder is not None:
                entry["bertscore_f1"] = bertscore_greedy(pred_text, ref_text, embedder).f1
                entry["sentence_similarity"] = sentence_similarity(
                    pred_text or " ", ref_text or " ", embedder
                )
            records.append(entry)

        def ratio(rs):
            total = sum(r["total"] for r in rs)
            if total == 0:
                raise MetricUndefinedError("no reference explanations drawn")
            return sum(r["matched"] for r in rs) / total

        values = [
            _metric(records, ratio, "interpret_accuracy", config, 6),
            _metric(records, lambda rs: sum(r["meteor"] for r in rs) / len(rs),
                    "meteor", config, 7),
        ]
        if embedder is not None:
            values.append(
                _metric(records, lambda rs: sum(r["bertscore_f1"] for r in rs) / len(rs),
                        "bertscore_f1", config, 8)
            )
            values.append(
                _metric(records,
                        lambda rs: sum(r["sentence_similarity"] for r in rs) / len(rs),
                        "sentence_similarity", config, 9)
            )
        return values

    # Uncertainty explanation: scored over ground-truth uncertainty cases only.
    records = []
    for i in ids:
        if not _is_uncertain(items[i]):
            continue
        ref_list = list(items[i].uncertainty_explanation)  # type: ignore[union-attr]
        pred_list = list(preds[i].uncertainty_explanations or ())
        matched = len(greedy_matches(pred_list, ref_list, matcher.similarity,
                                     matcher.threshold))
        records.append({"matched": matched, "total": len(ref_list)})
    if len(records) < 2:
        log.warning("interpret_accuracy_eu skipped: fewer than 2 uncertainty cases")
        return []

    def ratio_eu(rs):
        total = sum(r["total"] for r in rs)
        if total == 0:
            raise MetricUndefinedError("no uncertainty explanations drawn")
        return sum(r["matched"] for r in rs) / total

    return [_metric(records, ratio_eu, "interpret_accuracy_eu", config, 10)]


def run_evaluation(
    config: RunConfig,
    corpus: Sequence[CorpusItem],
    criteria: CriteriaSet,
    client: ChatClient,
    embedder: Embedder | None = None,
) -> list[MetricReport]:
    if not corpus:
        raise SchemaError("cannot evaluate an empty corpus")
    run_dir = Path(config.output_dir) / config.run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    templates = load_templates(config.template_dir)
    matcher = ExplanationMatcher(threshold=config.matcher_threshold, embedder=embedder)

    snapshot = config.snapshot()
    snapshot["matcher_config"] = matcher.config()
    (run_dir / CONFIG_SNAPSHOT).write_text(json.dumps(snapshot, indent=2) + "\n", "utf-8")

    items = {_item_id(item): item for item in corpus}
    if len(items) != len(corpus):
        raise SchemaError("corpus contains duplicate note ids")
    demos: dict[tuple[str, str], Demonstration] = {}
    for item in corpus:
        for subtask in config.subtasks:
            demo = render_demonstration(item, subtask, templates, criteria)
            demos[(demo.note_id, subtask.value)] = demo

    log_lines = [f"run {config.run_id}: {len(items)} notes x {len(config.subtasks)} subtasks"]
    responses = _collect_responses(list(demos.values()), client, config, run_dir, log_lines)
    cached = sum(1 for r in responses.values() if r.cached)
    log_lines.append(f"responses: {len(responses)} total, {cached} from cache")

    predictions: dict[tuple[str, str], ParsedPrediction] = {}
    for key, demo in demos.items():
        response = responses.get(key)
        raw = response.text if response is not None else ""
        predictions[key] = parse_prediction(raw, demo.subtask, note_id=demo.note_id)
    save_predictions([predictions[k] for k in sorted(predictions)], run_dir / PREDICTIONS_FILE)

    reports = []
    for subtask in config.subtasks:
        subtask_demos = {i: d for (i, s), d in demos.items() if s == subtask.value}
        subtask_preds = {i: p for (i, s), p in predictions.items() if s == subtask.value}
        values = [
            v for v in _score_subtask(subtask, subtask_demos, subtask_preds, items,
                                      matcher, embedder, config)
            if v is not None
        ]
        reports.append(
            MetricReport(
                run_id=config.run_id,
                subtask=subtask.value,
                metrics=tuple(values),
                matcher_config=matcher.config(),
                seed=config.seed,
            )
        )
        for value in values:
            log_lines.append(
                f"{subtask.value} {value.name}: {value.mean:.4f} "
                f"[{value.ci_low:.4f}, {value.ci_high:.4f}] n={value.n}"
            )

    (run_dir / METRICS_FILE).write_text(
        json.dumps([r.to_dict() for r in reports], indent=2) + "\n", "utf-8"
    )
    _write_log(run_dir, log_lines)
    return reports


# --- zero-shot sufficiency probe ---------------------------------------------

PROBE_INSTRUCTION = (
    "You are given a clinical note, the patient's confirmed primary diagnosis, and "
    "the diagnostic criteria for that diagnosis. Decide whether the note contains "
    "sufficient evidence for a confident diagnosis. Answer exactly "
    '"Sufficient information (Confident diagnosis)" or '
    '"Insufficient information (Diagnostic uncertainty)", then explain briefly.'
)


def sufficiency_probe(
    item: CorpusItem,
    criteria: CriteriaSet,
    client: ChatClient,
    model_id: str = "default",
    max_tokens: int = 1024,
) -> SufficiencyVerdict:
    """Zero-shot probe: the model sees the note, the ground-truth diagnosis,
    and the criteria, and judges evidence sufficiency."""
    note_id = _item_id(item)
    text = item.text if isinstance(item, MaskedNote) else item.note.text
    disease_id = item.diagnosis if isinstance(item, MaskedNote) else item.note.primary_diagnosis
    rules = "\n".join(f"- {c.text}" for c in criteria.criteria_for(disease_id))
    prompt = (
        f"{PROBE_INSTRUCTION}\n\nConfirmed diagnosis: {criteria.display_name(disease_id)}\n"
        f"Diagnostic criteria:\n{rules}\n\nClinical note:\n{text}"
    )
    response = client.complete(user_request(model_id, prompt, max_tokens=max_tokens))
    parsed = parse_prediction(response.text, Subtask.UNCERTAINTY_RECOGNITION, note_id=note_id)
    if not parsed.parse_ok:
        verdict = "parse_failed"
    elif parsed.uncertainty_label == INSUFFICIENT:
        verdict = "insufficient"
    else:
        verdict = "sufficient"
    return SufficiencyVerdict(note_id=note_id, verdict=verdict,
                              model_rationale=response.text)


# --- training-set ablations ----------------------------------------------------


def _stratified_retain(
    items: Sequence[SplitItem],
    fraction: Fraction,
    seed: int,
) -> list[SplitItem]:
    """Keep a seeded fraction per (disease, completeness) stratum; stratum
    quotas are floored and the global deficit is distributed by largest
    remainder so the total is exactly round(fraction * n)."""
    strata: dict[tuple[str, bool], list[SplitItem]] = {}
    for item in items:
        strata.setdefault((item.disease_id, item.complete), []).append(item)
    total_target = round(fraction * len(items))

    keys = sorted(strata)
    quotas = {key: fraction * len(strata[key]) for key in keys}
    counts = {key: int(quotas[key]) for key in keys}
    deficit = total_target - sum(counts.values())
    by_remainder = sorted(keys, key=lambda k: (-(quotas[k] - counts[k]), k))
    for key in by_remainder[:deficit]:
        counts[key] += 1

    retained: list[SplitItem] = []
    for key in keys:
        disease_id, complete = key
        members = sorted(strata[key], key=lambda s: s.note_id)
        rng = random.Random(f"{seed}|{disease_id}|{int(complete)}")
        rng.shuffle(members)
        retained.extend(members[: counts[key]])
    return sorted(retained, key=lambda s: s.note_id)


def subsample_by_size(
    train: Sequence[SplitItem],
    fraction: float | str | Fraction,
    seed: int,
) -> list[SplitItem]:
    """Seeded stratified subsample preserving per-disease proportions."""
    fraction = fraction if isinstance(fraction, Fraction) else Fraction(str(fraction))
    if not (0 < fraction <= 1):
        raise SchemaError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1:
        return list(train)
    return _stratified_retain(train, fraction, seed)


def reduce_diversity(
    train: Sequence[SplitItem],
    fraction: float | str | Fraction,
    seed: int,
) -> list[SplitItem]:
    """Retain a stratified fraction of distinct notes, then duplicate them
    round-robin (sorted by note_id) until the original size is restored."""
    fraction = fraction if isinstance(fraction, Fraction) else Fraction(str(fraction))
    if not (0 < fraction < 1):
        raise SchemaError(f"fraction must be in (0, 1), got {fraction}")
    retained = _stratified_retain(train, fraction, seed)
    if not retained:
        raise SchemaError("fraction too small: no notes retained")
    out = list(retained)
    cursor = 0
    while len(out) < len(train):
        out.append(retained[cursor % len(retained)])
        cursor += 1
    return out


# --- report emission -------------------------------------------------------------

REPORT_COLUMNS = ("run_id", "subtask", "metric", "mean", "ci_low", "ci_high", "n")


def emit_report(
    reports: Sequence[MetricReport],
    path: str | Path,
    format: str = "structured",
) -> Path:
    """Write reports as a nested JSON document ("structured") or one CSV row
    per (subtask, metric) sorted by (run_id, subtask, metric) ("tabular")."""
    if not reports:
        raise SchemaError("no reports to emit")
    path = Path(path)
    if format == "structured":
        path.write_text(
            json.dumps([r.to_dict() for r in reports], indent=2, ensure_ascii=False) + "\n",
            "utf-8",
        )
        return path
    if format != "tabular":
        raise SchemaError(f"unknown report format {format!r}")
    rows = []
    for report in reports:
        for value in report.metrics:
            rows.append((report.run_id, report.subtask, value.name,
                         repr(value.mean), repr(value.ci_low), repr(value.ci_high),
                         str(value.n)))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    lines = [",".join(REPORT_COLUMNS)]
    lines.extend(",".join(row) for row in rows)
    path.write_text("\n".join(lines) + "\n", "utf-8")
    return path
