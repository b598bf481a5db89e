"""Editing metrics and the evaluation harness.

Four probes per case, all asked in the test language against a store of
edit-language facts: the edit question (reliability), a rephrase
(generality), an unrelated question (locality), and a follow-up question
(portability). Reliability/generality/portability compare the post-edit
answer against the record's target answers; locality compares the post-edit
answer against the model's own pre-edit prediction, captured through a bare
passthrough prompt before anything is retrieved.

Matches are scored by normalized exact match and token-level F1 (per
character for TH and ZH, whitespace tokens otherwise).
"""

from __future__ import annotations

import csv
import io
import json
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

from .config import Backends, RunConfig
from .errors import TransportError, ValidationError
from .gateway import GenerationRequest, generate
from .kb import (
    CHARACTER_TOKENIZED,
    KnowledgeBase,
    LanguageCode,
    ParallelRecord,
    normalize_text,
)
from .prompting import PromptMode, build_plan, render
from .retrieval import (
    ExamplePair,
    ScoredFact,
    build_kb_from_records,
    probe_text,
    retrieve,
    select_examples,
)

PROBES = ("question", "rephrase", "locality", "portability")
_PROBE_METRIC = {
    "question": "reliability",
    "rephrase": "generality",
    "locality": "locality",
    "portability": "portability",
}
METRICS = ("reliability", "generality", "locality", "portability")


@dataclass(frozen=True)
class MetricSet:
    em: float
    f1: float


def metric_tokens(text: str, lang: LanguageCode | str) -> list[str]:
    """Tokens for F1: whitespace-split, except per character (whitespace
    dropped) for languages written without spaces."""
    lang = LanguageCode.parse(lang)
    normalized = normalize_text(text)
    if lang in CHARACTER_TOKENIZED:
        return [ch for ch in normalized if not ch.isspace()]
    return normalized.split()


def exact_match(prediction: str, gold: str) -> float:
    return 1.0 if normalize_text(prediction) == normalize_text(gold) else 0.0


def token_f1(prediction: str, gold: str, lang: LanguageCode | str) -> float:
    pred_tokens = metric_tokens(prediction, lang)
    gold_tokens = metric_tokens(gold, lang)
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = Counter(pred_tokens) & Counter(gold_tokens)
    overlap = sum(common.values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def score_metrics(prediction: str, gold: str, lang: LanguageCode | str) -> MetricSet:
    return MetricSet(em=exact_match(prediction, gold), f1=token_f1(prediction, gold, lang))


@dataclass(frozen=True)
class CaseResult:
    record_id: str
    edit_lang: LanguageCode
    test_lang: LanguageCode
    reliability: MetricSet
    generality: MetricSet
    locality: MetricSet
    portability: MetricSet
    retrieved_ok: dict[str, bool]
    pre_edit_answers: dict[str, str]
    post_edit_answers: dict[str, str]
    locality_gold: str  # the pre-edit prediction the locality probe is held to
    timings: dict[str, float]

    def metric(self, name: str) -> MetricSet:
        return getattr(self, name)


@dataclass(frozen=True)
class CaseFailure:
    record_id: str
    stage: str
    message: str


def _generation_request(prompt: str, config: RunConfig) -> GenerationRequest:
    # The harness pins temperature to 0; sampling would break determinism.
    return GenerationRequest(
        prompt=prompt,
        max_new_tokens=config.max_new_tokens,
        stop_sequences=config.stop_sequences,
        temperature=0.0,
    )


def _passthrough_answer(
    query: str, test_lang: LanguageCode, config: RunConfig, backends: Backends
) -> tuple[str, float]:
    plan = build_plan(PromptMode.PASSTHROUGH, query, test_lang)
    rendered = render(plan)
    resp = generate(_generation_request(rendered.text, config), backends.generator)
    return resp.text, resp.latency_s


def _probe_examples(
    query: str,
    test_lang: LanguageCode,
    edit_lang: LanguageCode,
    config: RunConfig,
    backends: Backends,
    pool: Sequence[ParallelRecord],
) -> list[ExamplePair]:
    if config.mode not in (PromptMode.FEW_MONO, PromptMode.FEW_BI) and not (
        config.mode is PromptMode.IKE_ALL and config.shots > 0
    ):
        return []
    if config.shots > len(pool):
        raise ValidationError(
            f"shots={config.shots} exceeds the {len(pool)}-record example pool"
        )
    return select_examples(
        query,
        pool,
        (test_lang, edit_lang),
        config.shots,
        backends.embedder,
        strategy=config.example_strategy,
        seed=config.seed,
    )


def evaluate_case(
    record: ParallelRecord,
    edit_lang: LanguageCode | str,
    test_lang: LanguageCode | str,
    kb: KnowledgeBase,
    config: RunConfig,
    backends: Backends,
    example_pool: Sequence[ParallelRecord] = (),
) -> CaseResult:
    """Run the four-probe protocol for one record.

    The record itself is excluded from the example pool: its own QA pair in
    the demonstrations would hand the model the gold answer.

    Transport failures are re-raised with the probe and stage attached so the
    matrix runner can attribute them.
    """
    edit_lang = LanguageCode.parse(edit_lang)
    test_lang = LanguageCode.parse(test_lang)
    test_slice = record.languages[test_lang]
    pool = [r for r in example_pool if r.record_id != record.record_id]
    gold_entry = kb.find(edit_lang, record.languages[edit_lang].question)
    scorer_backend = backends.scorer_backend(config.scorer)

    case_start = time.monotonic()
    pre: dict[str, str] = {}
    post: dict[str, str] = {}
    retrieved_ok: dict[str, bool] = {}
    generation_s = 0.0
    retrieval_s = 0.0

    for probe in PROBES:
        query = probe_text(record, probe, test_lang)
        stage = f"pre_edit:{probe}"
        try:
            answer, latency = _passthrough_answer(query, test_lang, config, backends)
        except TransportError as exc:
            raise TransportError(str(exc), stage=stage) from exc
        pre[probe] = answer
        generation_s += latency

    snap = kb.snapshot()
    for probe in PROBES:
        query = probe_text(record, probe, test_lang)
        stage = f"retrieve:{probe}"
        try:
            t0 = time.monotonic()
            hit: ScoredFact | None = retrieve(
                query, test_lang, snap, config.scorer, scorer_backend
            )
            retrieval_s += time.monotonic() - t0
            examples = (
                _probe_examples(query, test_lang, edit_lang, config, backends, pool)
                if (hit is not None or config.mode is PromptMode.IKE_ALL)
                else []
            )
        except TransportError as exc:
            raise TransportError(str(exc), stage=stage) from exc
        if probe == "locality":
            retrieved_ok[probe] = hit is None
        else:
            retrieved_ok[probe] = (
                hit is not None and gold_entry is not None and hit.entry.id == gold_entry.id
            )
        plan = build_plan(config.mode, query, test_lang, retrieved=hit, kb=snap.entries,
                          examples=examples)
        rendered = render(plan)
        stage = f"generate:{probe}"
        try:
            resp = generate(_generation_request(rendered.text, config), backends.generator)
        except TransportError as exc:
            raise TransportError(str(exc), stage=stage) from exc
        post[probe] = resp.text
        generation_s += resp.latency_s

    golds = {
        "question": test_slice.answer,
        "rephrase": test_slice.answer,
        "locality": pre["locality"],
        "portability": test_slice.portability_answer,
    }
    scored = {
        _PROBE_METRIC[probe]: score_metrics(post[probe], golds[probe], test_lang)
        for probe in PROBES
    }
    return CaseResult(
        record_id=record.record_id,
        edit_lang=edit_lang,
        test_lang=test_lang,
        reliability=scored["reliability"],
        generality=scored["generality"],
        locality=scored["locality"],
        portability=scored["portability"],
        retrieved_ok=retrieved_ok,
        pre_edit_answers=pre,
        post_edit_answers=post,
        locality_gold=pre["locality"],
        timings={
            "retrieval_s": retrieval_s,
            "generation_s": generation_s,
            "total_s": time.monotonic() - case_start,
        },
    )


@dataclass
class CellReport:
    edit_lang: LanguageCode
    test_lang: LanguageCode
    n_cases: int
    n_failures: int
    metrics: dict[str, MetricSet | None]
    cases: list[dict]
    failures: list[dict]
    timing: dict[str, float]

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "edit_lang": self.edit_lang.value,
            "test_lang": self.test_lang.value,
            "n_cases": self.n_cases,
            "n_failures": self.n_failures,
            "metrics": {
                name: None if ms is None else {"em": ms.em, "f1": ms.f1}
                for name, ms in self.metrics.items()
            },
            "cases": self.cases,
            "failures": self.failures,
        }
        if include_timing:
            out["timing"] = self.timing
        return out


@dataclass
class EvalReport:
    config: dict
    cells: list[CellReport]
    case_count: int
    failure_count: int
    mean_edit_seconds: float

    def cell(self, edit_lang: LanguageCode | str, test_lang: LanguageCode | str) -> CellReport:
        e = LanguageCode.parse(edit_lang)
        t = LanguageCode.parse(test_lang)
        for cell in self.cells:
            if cell.edit_lang is e and cell.test_lang is t:
                return cell
        raise KeyError(f"no cell for {e.value}->{t.value}")

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "config": self.config,
            "case_count": self.case_count,
            "failure_count": self.failure_count,
            "cells": [c.to_dict(include_timing=include_timing) for c in self.cells],
        }
        if include_timing:
            out["timing"] = {"mean_edit_seconds": self.mean_edit_seconds}
        return out

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(
            self.to_dict(include_timing=include_timing),
            ensure_ascii=False,
            sort_keys=True,
            indent=2,
        )

    def to_csv(self) -> str:
        """Aggregate rows: edit_lang, test_lang, metric, em, f1, n."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["edit_lang", "test_lang", "metric", "em", "f1", "n"])
        for cell in self.cells:
            for name in METRICS:
                ms = cell.metrics.get(name)
                writer.writerow(
                    [
                        cell.edit_lang.value,
                        cell.test_lang.value,
                        name,
                        "" if ms is None else repr(ms.em),
                        "" if ms is None else repr(ms.f1),
                        cell.n_cases,
                    ]
                )
        return buf.getvalue()


def _mean(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


def _case_row(case: CaseResult) -> dict:
    row: dict = {"record_id": case.record_id}
    for name in METRICS:
        ms = case.metric(name)
        row[f"{name}_em"] = ms.em
        row[f"{name}_f1"] = ms.f1
    row["retrieved_ok"] = dict(case.retrieved_ok)
    return row


def _aggregate_cell(
    edit_lang: LanguageCode,
    test_lang: LanguageCode,
    results: list[CaseResult],
    failures: list[CaseFailure],
) -> CellReport:
    metrics: dict[str, MetricSet | None] = {}
    for name in METRICS:
        em = _mean([c.metric(name).em for c in results])
        f1 = _mean([c.metric(name).f1 for c in results])
        metrics[name] = None if em is None else MetricSet(em=em, f1=f1)
    timing = {
        "retrieval_s": sum(c.timings["retrieval_s"] for c in results),
        "generation_s": sum(c.timings["generation_s"] for c in results),
        "total_s": sum(c.timings["total_s"] for c in results),
    }
    return CellReport(
        edit_lang=edit_lang,
        test_lang=test_lang,
        n_cases=len(results),
        n_failures=len(failures),
        metrics=metrics,
        cases=[_case_row(c) for c in results],
        failures=[
            {"record_id": f.record_id, "stage": f.stage, "message": f.message} for f in failures
        ],
        timing=timing,
    )


def run_matrix(
    dataset: Sequence[ParallelRecord],
    edit_langs: Sequence[LanguageCode | str],
    test_langs: Sequence[LanguageCode | str],
    config: RunConfig,
    backends: Backends,
    progress: Callable[[int, int], None] | None = None,
) -> EvalReport:
    """Evaluate every record in every (edit language, test language) cell.

    The store for a cell holds all edit-language facts of the dataset. Cases
    run in record_id order; failed cases are excluded from the means and
    reported with their stage. Metric aggregates are deterministic for
    deterministic backends regardless of concurrency.
    """
    if not dataset:
        raise ValidationError("dataset is empty")
    if not edit_langs or not test_langs:
        raise ValidationError("edit_langs and test_langs must be non-empty")
    edit_codes = [LanguageCode.parse(c) for c in edit_langs]
    test_codes = [LanguageCode.parse(c) for c in test_langs]
    records = sorted(dataset, key=lambda r: r.record_id)

    cells: list[CellReport] = []
    done = 0
    total = len(edit_codes) * len(test_codes)
    all_results: list[CaseResult] = []
    failure_count = 0
    for edit_lang in edit_codes:
        kb, _ = build_kb_from_records(records, edit_lang)
        for test_lang in test_codes:
            results: list[CaseResult] = []
            failures: list[CaseFailure] = []

            def run_one(record: ParallelRecord) -> CaseResult | CaseFailure:
                try:
                    return evaluate_case(
                        record, edit_lang, test_lang, kb, config, backends,
                        example_pool=records,
                    )
                except TransportError as exc:
                    return CaseFailure(
                        record_id=record.record_id,
                        stage=exc.stage or "backend",
                        message=str(exc),
                    )

            if config.concurrency > 1:
                with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
                    outcomes = list(pool.map(run_one, records))
            else:
                outcomes = [run_one(r) for r in records]
            for outcome in outcomes:
                (results if isinstance(outcome, CaseResult) else failures).append(outcome)  # type: ignore[arg-type]
            cells.append(_aggregate_cell(edit_lang, test_lang, results, failures))
            all_results.extend(results)
            failure_count += len(failures)
            done += 1
            if progress is not None:
                progress(done, total)

    mean_edit = _mean([c.timings["total_s"] for c in all_results]) or 0.0
    return EvalReport(
        config=config.snapshot(),
        cells=cells,
        case_count=len(all_results),
        failure_count=failure_count,
        mean_edit_seconds=mean_edit,
    )


DEFAULT_ABLATION_SIZES = (10, 50, 100, 200, 400, 800)


def ablate_kb_size(
    dataset: Sequence[ParallelRecord],
    sizes: Sequence[int],
    config: RunConfig,
    backends: Backends,
    probe_count: int | None = None,
    edit_lang: LanguageCode | str = LanguageCode.EN,
    test_lang: LanguageCode | str = LanguageCode.EN,
) -> list[dict]:
    """Grow the store, hold the probe subset fixed, and read the metric and
    wall-time trend. The probe subset is the first records of the dataset and
    must fit inside the smallest store slice."""
    if not sizes:
        raise ValidationError("sizes is empty")
    for size in sizes:
        if size <= 0:
            raise ValidationError(f"store size must be positive, got {size}")
        if size > len(dataset):
            raise ValidationError(f"store size {size} exceeds the {len(dataset)}-record dataset")
    edit_lang = LanguageCode.parse(edit_lang)
    test_lang = LanguageCode.parse(test_lang)
    records = sorted(dataset, key=lambda r: r.record_id)
    n_probe = min(sizes) if probe_count is None else probe_count
    if n_probe <= 0 or n_probe > min(sizes):
        raise ValidationError("probe subset must be non-empty and within every store slice")
    probes = records[:n_probe]
    scorer_backend = backends.scorer_backend(config.scorer)

    from .retrieval import retrieval_accuracy  # local import to keep module deps one-way

    rows: list[dict] = []
    for size in sizes:
        slice_records = records[:size]
        kb, _ = build_kb_from_records(slice_records, edit_lang)
        start = time.monotonic()
        results = [
            evaluate_case(r, edit_lang, test_lang, kb, config, backends, example_pool=records)
            for r in probes
        ]
        wall_s = time.monotonic() - start
        accuracy = retrieval_accuracy(
            probes,
            "question",
            (test_lang, edit_lang),
            config.scorer,
            scorer_backend,
            kb_records=slice_records,
        )
        row: dict = {"kb_size": size, "n_probes": n_probe, "retrieval_accuracy": accuracy,
                     "wall_s": wall_s}
        for name in METRICS:
            row[f"{name}_em"] = _mean([c.metric(name).em for c in results])
            row[f"{name}_f1"] = _mean([c.metric(name).f1 for c in results])
        rows.append(row)
    return rows


def ablate_shots(
    dataset: Sequence[ParallelRecord],
    shot_counts: Sequence[int],
    config: RunConfig,
    backends: Backends,
    edit_lang: LanguageCode | str = LanguageCode.EN,
    test_lang: LanguageCode | str = LanguageCode.EN,
) -> list[dict]:
    """Metrics per shot count on one language pair. A count of 0 runs
    zero-shot; positive counts run the configured few-shot mode."""
    if not shot_counts:
        raise ValidationError("shot_counts is empty")
    few_mode = (
        config.mode
        if config.mode in (PromptMode.FEW_MONO, PromptMode.FEW_BI)
        else PromptMode.FEW_BI
    )
    rows: list[dict] = []
    for shots in shot_counts:
        if shots < 0:
            raise ValidationError("shot counts must be >= 0")
        run_cfg = replace(
            config, mode=PromptMode.ZERO if shots == 0 else few_mode, shots=shots
        )
        report = run_matrix(dataset, [edit_lang], [test_lang], run_cfg, backends)
        cell = report.cells[0]
        row: dict = {"mode": run_cfg.mode.value, "shots": shots, "n_cases": cell.n_cases}
        for name in METRICS:
            ms = cell.metrics[name]
            row[f"{name}_em"] = None if ms is None else ms.em
            row[f"{name}_f1"] = None if ms is None else ms.f1
        rows.append(row)
    return rows


def measure_latency(
    dataset: Sequence[ParallelRecord],
    series: Sequence[tuple[PromptMode | str, int]],
    n_edits: int,
    config: RunConfig,
    backends: Backends,
    edit_lang: LanguageCode | str = LanguageCode.EN,
    test_lang: LanguageCode | str = LanguageCode.EN,
) -> list[dict]:
    """Mean per-edit time for each (mode, shots) pair over the first n_edits
    records, itemized into retrieval wall time and reported generation
    latency. One edit = one reliability probe through the full pipeline."""
    if n_edits < 1:
        raise ValidationError("n_edits must be >= 1")
    if n_edits > len(dataset):
        raise ValidationError(f"n_edits={n_edits} exceeds the {len(dataset)}-record dataset")
    edit_lang = LanguageCode.parse(edit_lang)
    test_lang = LanguageCode.parse(test_lang)
    records = sorted(dataset, key=lambda r: r.record_id)
    kb, _ = build_kb_from_records(records, edit_lang)
    snap = kb.snapshot()
    rows: list[dict] = []
    for mode, shots in series:
        run_cfg = replace(config, mode=PromptMode.parse(mode), shots=shots)
        scorer_backend = backends.scorer_backend(run_cfg.scorer)
        retrieval_s = 0.0
        generation_s = 0.0
        for record in records[:n_edits]:
            query = probe_text(record, "question", test_lang)
            t0 = time.monotonic()
            hit = retrieve(query, test_lang, snap, run_cfg.scorer, scorer_backend)
            retrieval_s += time.monotonic() - t0
            pool = [r for r in records if r.record_id != record.record_id]
            examples = _probe_examples(
                query, test_lang, edit_lang, run_cfg, backends, pool
            )
            plan = build_plan(run_cfg.mode, query, test_lang, retrieved=hit,
                              kb=snap.entries, examples=examples)
            rendered = render(plan)
            resp = generate(_generation_request(rendered.text, run_cfg), backends.generator)
            generation_s += resp.latency_s
        rows.append(
            {
                "mode": run_cfg.mode.value,
                "shots": shots,
                "n_edits": n_edits,
                "retrieval_s": retrieval_s / n_edits,
                "generation_s": generation_s / n_edits,
                "per_edit_s": (retrieval_s + generation_s) / n_edits,
            }
        )
    return rows
