"""Command-line interface.

Subcommands: ingest, edit, query, eval, ablate-kb, ablate-shots,
retriever-acc, bench-latency, serve. Exit codes: 0 success, 1 validation or
usage error, 2 transport error. Runs that write outputs also write a config
snapshot beside them, so any run can be reproduced from its artifacts.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .config import Backends, RunConfig
from .errors import TransportError, ValidationError
from .evaluation import (
    DEFAULT_ABLATION_SIZES,
    ablate_kb_size,
    ablate_shots,
    measure_latency,
    run_matrix,
)
from .gateway import (
    FixtureEmbedder,
    GenerationRequest,
    MockGenerationBackend,
    MockScript,
    RemoteClassifier,
    RemoteEmbedder,
    RemoteGenerationBackend,
    generate,
)
from .kb import (
    ALL_LANGUAGES,
    KnowledgeBase,
    LanguageCode,
    deduplicate,
    ingest_mzsre,
    load_kb,
    save_corpus,
    save_kb,
    upsert_fact,
)
from .prompting import PromptMode, build_plan, render
from .retrieval import PROBE_KINDS, ScorerConfig, retrieval_accuracy, retrieve, select_examples

log = logging.getLogger("mledit")


def _parse_langs(raw: str) -> list[LanguageCode]:
    if raw.strip().lower() == "all":
        return list(ALL_LANGUAGES)
    return [LanguageCode.parse(part) for part in raw.split(",") if part.strip()]


def _parse_int_list(raw: str) -> list[int]:
    try:
        return [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ValidationError(f"expected a comma-separated integer list, got {raw!r}") from None


def _add_backend_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("backends")
    group.add_argument("--generate-url", default=os.environ.get("MLEDIT_GENERATE_URL"),
                       help="remote generation endpoint; omit for the scripted mock")
    group.add_argument("--embed-url", default=os.environ.get("MLEDIT_EMBED_URL"),
                       help="remote embedding endpoint; omit for the fixture embedder")
    group.add_argument("--classify-url", default=os.environ.get("MLEDIT_CLASSIFY_URL"),
                       help="remote pair-classifier endpoint")
    group.add_argument("--bearer-token", default=os.environ.get("MLEDIT_TOKEN"))
    group.add_argument("--mock-script", help="scripted mock model behavior (JSON)")
    group.add_argument("--embed-fixture", help="embedding fixture map (JSON)")
    group.add_argument("--embed-dim", type=int, default=None)
    group.add_argument("--embed-seed", type=int, default=0)
    group.add_argument("--scorer", choices=["reference-cosine", "remote-classifier"],
                       default="reference-cosine")
    group.add_argument("--threshold", type=float, default=None,
                       help="relatedness threshold; defaults per scorer kind")
    group.add_argument("--pair-separator", default="</s>")


def _add_run_args(parser: argparse.ArgumentParser, *, mode: str = "few_bi",
                  shots: int = 16) -> None:
    group = parser.add_argument_group("run")
    group.add_argument("--mode", default=mode,
                       choices=[m.value for m in PromptMode])
    group.add_argument("--shots", type=int, default=shots)
    group.add_argument("--strategy", choices=["search", "random"], default="search")
    group.add_argument("--seed", type=int, default=0)
    group.add_argument("--concurrency", type=int, default=1)
    group.add_argument("--max-new-tokens", type=int, default=64)


def build_backends(args: argparse.Namespace) -> Backends:
    if args.generate_url:
        generator = RemoteGenerationBackend(args.generate_url, token=args.bearer_token)
    else:
        script = MockScript.from_file(args.mock_script) if args.mock_script else MockScript()
        generator = MockGenerationBackend(script)
    if args.embed_url:
        embedder = RemoteEmbedder(args.embed_url, dim=args.embed_dim, token=args.bearer_token)
    else:
        embedder = FixtureEmbedder(dim=args.embed_dim, fixture=args.embed_fixture,
                                   seed=args.embed_seed)
    classifier = None
    if args.classify_url:
        classifier = RemoteClassifier(args.classify_url, pair_separator=args.pair_separator,
                                      token=args.bearer_token)
    return Backends(generator=generator, embedder=embedder, classifier=classifier)


def build_run_config(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        mode=PromptMode.parse(args.mode),
        shots=args.shots,
        example_strategy=args.strategy,
        scorer=ScorerConfig(kind=args.scorer, threshold=args.threshold,
                            pair_separator=args.pair_separator),
        seed=args.seed,
        concurrency=args.concurrency,
        max_new_tokens=args.max_new_tokens,
    )


def _write_snapshot(out_dir: Path, command: str, config: RunConfig, extra: dict) -> None:
    payload = {"command": command, "run": config.snapshot(), **extra}
    (out_dir / "config.json").write_text(
        json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def _print_rows(rows: list[dict], columns: list[str]) -> None:
    widths = {c: max(len(c), *(len(_fmt(r.get(c))) for r in rows)) for c in columns}
    print("  ".join(c.ljust(widths[c]) for c in columns))
    for row in rows:
        print("  ".join(_fmt(row.get(c)).ljust(widths[c]) for c in columns))


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


# --------------------------------------------------------------------------
# Subcommands


def _cmd_ingest(args: argparse.Namespace) -> int:
    records = ingest_mzsre(args.input)
    kept, conflicts = deduplicate(records)
    save_corpus(kept, args.out)
    if args.conflicts_out:
        payload = [
            {"record_id": c.record.record_id, "kept_record_id": c.kept_record_id,
             "reason": c.reason}
            for c in conflicts
        ]
        Path(args.conflicts_out).write_text(
            json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
    print(f"ingested={len(records)} kept={len(kept)} conflicts={len(conflicts)}")
    for c in conflicts:
        print(f"  {c.record.record_id}: {c.reason} (kept {c.kept_record_id})")
    return 0


def _cmd_edit(args: argparse.Namespace) -> int:
    kb_path = Path(args.kb)
    kb = load_kb(kb_path) if kb_path.exists() else KnowledgeBase()
    entry_id, replaced = upsert_fact(kb, args.lang, args.question, args.answer)
    save_kb(kb, kb_path)
    print(f"id={entry_id} replaced={str(replaced).lower()} entries={len(kb)} version={kb.version}")
    return 0


def _cmd_query(args: argparse.Namespace) -> int:
    kb = load_kb(args.kb)
    backends = build_backends(args)
    config = build_run_config(args)
    test_lang = LanguageCode.parse(args.test_lang)
    scorer_backend = backends.scorer_backend(config.scorer)
    hit = retrieve(args.text, test_lang, kb, config.scorer, scorer_backend)
    examples = []
    if hit is not None and config.mode in (PromptMode.FEW_MONO, PromptMode.FEW_BI):
        if not args.dataset:
            raise ValidationError("few-shot query needs --dataset for the example pool")
        pool = ingest_mzsre(args.dataset)
        edit_lang = hit.entry.lang
        examples = select_examples(args.text, pool, (test_lang, edit_lang), config.shots,
                                   backends.embedder, strategy=config.example_strategy,
                                   seed=config.seed)
    plan = build_plan(config.mode, args.text, test_lang, retrieved=hit, kb=kb.entries(),
                      examples=examples)
    rendered = render(plan)
    pre = generate(GenerationRequest(prompt=args.text, max_new_tokens=config.max_new_tokens),
                   backends.generator)
    post = generate(GenerationRequest(prompt=rendered.text,
                                      max_new_tokens=config.max_new_tokens),
                    backends.generator)
    if hit is None:
        print("retrieved: none (no related knowledge; query passed through unchanged)")
    else:
        print(f"retrieved: {hit.entry.id} p={hit.decision.probability:.4f} "
              f"[{hit.entry.lang.value}] {hit.entry.question} -> {hit.entry.answer}")
    print("--- prompt ---")
    print(rendered.text)
    print("--- answers ---")
    print(f"pre_edit: {pre.text}")
    print(f"post_edit: {post.text}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    records = ingest_mzsre(args.dataset)
    backends = build_backends(args)
    config = build_run_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = run_matrix(records, _parse_langs(args.edit_langs), _parse_langs(args.test_langs),
                        config, backends)
    (out_dir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out_dir / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    _write_snapshot(out_dir, "eval", config,
                    {"dataset": str(args.dataset), "edit_langs": args.edit_langs,
                     "test_langs": args.test_langs})
    print(f"cells={len(report.cells)} cases={report.case_count} "
          f"failures={report.failure_count}")
    for cell in report.cells:
        ms = cell.metrics["reliability"]
        print(f"  {cell.edit_lang.value}->{cell.test_lang.value}: "
              f"reliability_em={_fmt(None if ms is None else ms.em)} n={cell.n_cases}")
    return 0


def _cmd_ablate_kb(args: argparse.Namespace) -> int:
    records = ingest_mzsre(args.dataset)
    backends = build_backends(args)
    config = build_run_config(args)
    sizes = _parse_int_list(args.sizes) if args.sizes else list(DEFAULT_ABLATION_SIZES)
    rows = ablate_kb_size(records, sizes, config, backends, probe_count=args.probes,
                          edit_lang=args.edit_lang, test_lang=args.test_lang)
    columns = ["kb_size", "n_probes", "reliability_em", "generality_em", "locality_em",
               "portability_em", "retrieval_accuracy", "wall_s"]
    _print_rows(rows, columns)
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "kb_ablation.json").write_text(
            json.dumps(rows, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
        _write_snapshot(out_dir, "ablate-kb", config,
                        {"dataset": str(args.dataset), "sizes": sizes})
    return 0


def _cmd_ablate_shots(args: argparse.Namespace) -> int:
    records = ingest_mzsre(args.dataset)
    backends = build_backends(args)
    config = build_run_config(args)
    counts = _parse_int_list(args.shot_counts)
    rows = ablate_shots(records, counts, config, backends, edit_lang=args.edit_lang,
                        test_lang=args.test_lang)
    columns = ["mode", "shots", "n_cases", "reliability_em", "generality_em", "locality_em",
               "portability_em"]
    _print_rows(rows, columns)
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "shots_ablation.json").write_text(
            json.dumps(rows, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
        _write_snapshot(out_dir, "ablate-shots", config,
                        {"dataset": str(args.dataset), "shot_counts": counts})
    return 0


def _cmd_retriever_acc(args: argparse.Namespace) -> int:
    records = ingest_mzsre(args.dataset)
    backends = build_backends(args)
    config = build_run_config(args)
    scorer_backend = backends.scorer_backend(config.scorer)
    probes = [p.strip() for p in args.probes.split(",") if p.strip()]
    rows = []
    for probe in probes:
        acc = retrieval_accuracy(records, probe,
                                 (LanguageCode.parse(args.test_lang),
                                  LanguageCode.parse(args.edit_lang)),
                                 config.scorer, scorer_backend)
        rows.append({"probe": probe, "accuracy": acc,
                     "fraction": f"{round(acc * len(records))}/{len(records)}"})
    _print_rows(rows, ["probe", "accuracy", "fraction"])
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "retriever_accuracy.json").write_text(
            json.dumps(rows, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
        _write_snapshot(out_dir, "retriever-acc", config, {"dataset": str(args.dataset)})
    return 0


def _cmd_bench_latency(args: argparse.Namespace) -> int:
    records = ingest_mzsre(args.dataset)
    backends = build_backends(args)
    config = build_run_config(args)
    series: list[tuple[PromptMode, int]] = []
    for part in args.series.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise ValidationError(f"series entries look like mode:shots, got {part!r}")
        mode_str, shots_str = part.split(":", 1)
        series.append((PromptMode.parse(mode_str), int(shots_str)))
    rows = measure_latency(records, series, args.n_edits, config, backends,
                           edit_lang=args.edit_lang, test_lang=args.test_lang)
    _print_rows(rows, ["mode", "shots", "n_edits", "retrieval_s", "generation_s", "per_edit_s"])
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "latency.json").write_text(
            json.dumps(rows, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
        _write_snapshot(out_dir, "bench-latency", config,
                        {"dataset": str(args.dataset), "series": args.series,
                         "n_edits": args.n_edits})
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import ServiceSettings, create_app

    settings = ServiceSettings(
        kb_path=args.kb,
        dataset_path=args.dataset,
        backends=build_backends(args),
        config=build_run_config(args),
        static_dir=args.static_dir,
    )
    app = create_app(settings)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    except OSError as exc:
        raise ValidationError(f"cannot bind {args.host}:{args.port}: {exc}") from None
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mledit",
        description="Multilingual knowledge editing over a retrieval-backed fact store.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and deduplicate a parallel corpus file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--conflicts-out")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("edit", help="insert or replace one fact in a store file")
    p.add_argument("--kb", required=True)
    p.add_argument("--lang", required=True)
    p.add_argument("--question", required=True)
    p.add_argument("--answer", required=True)
    p.set_defaults(func=_cmd_edit)

    p = sub.add_parser("query", help="one probe: retrieve, compose, generate")
    p.add_argument("--kb", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--test-lang", required=True)
    p.add_argument("--dataset", help="example pool for few-shot modes")
    _add_run_args(p, mode="zero", shots=0)
    _add_backend_args(p)
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("eval", help="full metric matrix over a corpus")
    p.add_argument("--dataset", required=True)
    p.add_argument("--edit-langs", default="all")
    p.add_argument("--test-langs", default="all")
    p.add_argument("--out-dir", required=True)
    _add_run_args(p)
    _add_backend_args(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate-kb", help="metrics and wall time as the store grows")
    p.add_argument("--dataset", required=True)
    p.add_argument("--sizes", help=f"default {','.join(map(str, DEFAULT_ABLATION_SIZES))}")
    p.add_argument("--probes", type=int, default=None, help="probe subset size")
    p.add_argument("--edit-lang", default="EN")
    p.add_argument("--test-lang", default="EN")
    p.add_argument("--out-dir")
    _add_run_args(p)
    _add_backend_args(p)
    p.set_defaults(func=_cmd_ablate_kb)

    p = sub.add_parser("ablate-shots", help="metrics per in-context shot count")
    p.add_argument("--dataset", required=True)
    p.add_argument("--shot-counts", default="0,2,4,8,16")
    p.add_argument("--edit-lang", default="EN")
    p.add_argument("--test-lang", default="EN")
    p.add_argument("--out-dir")
    _add_run_args(p)
    _add_backend_args(p)
    p.set_defaults(func=_cmd_ablate_shots)

    p = sub.add_parser("retriever-acc", help="retrieval accuracy per probe kind")
    p.add_argument("--dataset", required=True)
    p.add_argument("--probes", default=",".join(PROBE_KINDS))
    p.add_argument("--edit-lang", default="EN")
    p.add_argument("--test-lang", default="EN")
    p.add_argument("--out-dir")
    _add_run_args(p)
    _add_backend_args(p)
    p.set_defaults(func=_cmd_retriever_acc)

    p = sub.add_parser("bench-latency", help="per-edit timing per mode and shot count")
    p.add_argument("--dataset", required=True)
    p.add_argument("--series", default="zero:0,few_bi:4,few_bi:8,few_bi:16")
    p.add_argument("--n-edits", type=int, default=25)
    p.add_argument("--edit-lang", default="EN")
    p.add_argument("--test-lang", default="EN")
    p.add_argument("--out-dir")
    _add_run_args(p)
    _add_backend_args(p)
    p.set_defaults(func=_cmd_bench_latency)

    p = sub.add_parser("serve", help="run the REST service")
    p.add_argument("--kb", help="store file; omitted means in-memory only")
    p.add_argument("--dataset", help="example pool / eval corpus")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--static-dir", help="built console bundle; mounted at /console")
    _add_run_args(p, mode="zero", shots=0)
    _add_backend_args(p)
    p.set_defaults(func=_cmd_serve)

    return parser


def cli_dispatch(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help; usage maps to 1.
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TransportError as exc:
        stage = f" [{exc.stage}]" if exc.stage else ""
        print(f"transport error{stage}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
