"""REST service around the fact store and the edit pipeline.

The API is the only surface the browser console talks to. Mutations persist
to the store file when one is configured; evaluation runs as background jobs
that report progress and expose the finished report as JSON and CSV.
"""

from __future__ import annotations

import threading
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path
from time import perf_counter

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, Field

from .config import Backends, RunConfig
from .errors import TransportError, ValidationError
from .evaluation import EvalReport, run_matrix
from .gateway import GenerationRequest, generate
from .kb import (
    ALL_LANGUAGES,
    KnowledgeBase,
    LanguageCode,
    ParallelRecord,
    ingest_mzsre,
    load_kb,
    save_kb,
)
from .prompting import PromptMode, build_plan, render
from .retrieval import ExamplePair, retrieve, select_examples


@dataclass
class ServiceSettings:
    kb_path: str | Path | None = None
    dataset_path: str | Path | None = None
    backends: Backends = field(default_factory=Backends)
    config: RunConfig = field(default_factory=RunConfig)
    static_dir: str | Path | None = None


@dataclass
class EvalJob:
    job_id: str
    status: str = "queued"  # queued | running | done | failed
    done: int = 0
    total: int = 0
    error: str | None = None
    report: EvalReport | None = None


class FactIn(BaseModel):
    lang: str
    question: str
    answer: str


class QueryIn(BaseModel):
    text: str
    test_lang: str
    mode: str | None = None
    shots: int | None = None


class EvalIn(BaseModel):
    edit_langs: list[str] | str = "all"
    test_langs: list[str] | str = "all"
    mode: str | None = None
    shots: int | None = None
    strategy: str | None = None
    seed: int | None = None
    concurrency: int | None = None


def _langs(raw: list[str] | str) -> list[LanguageCode]:
    if isinstance(raw, str):
        if raw.strip().lower() == "all":
            return list(ALL_LANGUAGES)
        raw = [part for part in raw.split(",") if part.strip()]
    return [LanguageCode.parse(code) for code in raw]


def _default_shots(mode: PromptMode, configured: int) -> int:
    if mode in (PromptMode.ZERO, PromptMode.PASSTHROUGH):
        return 0
    if mode in (PromptMode.FEW_MONO, PromptMode.FEW_BI):
        return configured if configured > 0 else 4
    return configured  # ike_all accepts any count


def create_app(settings: ServiceSettings | None = None) -> FastAPI:
    settings = settings or ServiceSettings()
    kb_path = Path(settings.kb_path) if settings.kb_path else None
    kb = load_kb(kb_path) if kb_path is not None and kb_path.exists() else KnowledgeBase()
    dataset: list[ParallelRecord] = []
    if settings.dataset_path:
        dataset = ingest_mzsre(settings.dataset_path)
    backends = settings.backends
    base_config = settings.config

    jobs: dict[str, EvalJob] = {}
    jobs_lock = threading.Lock()
    job_counter = {"n": 0}

    def persist() -> None:
        if kb_path is not None:
            save_kb(kb, kb_path)

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        yield
        persist()

    app = FastAPI(title="mledit", lifespan=lifespan)
    app.state.kb = kb
    app.state.settings = settings

    @app.exception_handler(ValidationError)
    async def _validation_error(_, exc: ValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(TransportError)
    async def _transport_error(_, exc: TransportError):
        detail = {"detail": str(exc), "stage": exc.stage}
        return JSONResponse(status_code=502, content=detail)

    @app.get("/api/health")
    def health() -> dict:
        return {"status": "ok", "entries": len(kb), "version": kb.version}

    @app.get("/api/languages")
    def languages() -> dict:
        return {"languages": [code.value for code in ALL_LANGUAGES]}

    @app.get("/api/facts")
    def list_facts(lang: str | None = None) -> dict:
        entries = kb.entries()
        if lang is not None:
            code = LanguageCode.parse(lang)
            entries = tuple(e for e in entries if e.lang is code)
        return {"facts": [e.to_dict() for e in entries], "version": kb.version}

    @app.post("/api/facts")
    def add_fact(payload: FactIn) -> dict:
        entry_id, replaced = kb.upsert(payload.lang, payload.question, payload.answer)
        persist()
        return {"id": entry_id, "replaced": replaced, "version": kb.version}

    @app.delete("/api/facts/{fact_id}")
    def delete_fact(fact_id: str) -> dict:
        if not kb.remove(fact_id):
            raise HTTPException(status_code=404, detail=f"no fact with id {fact_id!r}")
        persist()
        return {"deleted": True, "version": kb.version}

    @app.post("/api/query")
    def query(payload: QueryIn) -> dict:
        """One probe: retrieve over the live store, compose, answer.

        Also answers the bare question with no store context, so the caller
        can show the before/after pair for the same text.
        """
        test_lang = LanguageCode.parse(payload.test_lang)
        mode = PromptMode.parse(payload.mode) if payload.mode else base_config.mode
        shots = payload.shots if payload.shots is not None else _default_shots(
            mode, base_config.shots)
        if shots < 0:
            raise ValidationError("shots must be >= 0")

        scorer = base_config.scorer
        t0 = perf_counter()
        hit = retrieve(payload.text, test_lang, kb.snapshot(), scorer,
                       backends.scorer_backend(scorer))
        retrieval_s = perf_counter() - t0

        examples: list[ExamplePair] = []
        few = mode in (PromptMode.FEW_MONO, PromptMode.FEW_BI)
        wants_examples = (few and hit is not None) or (mode is PromptMode.IKE_ALL and shots > 0)
        if wants_examples:
            if not dataset:
                raise ValidationError(
                    "few-shot modes need an example pool; start the service with a dataset")
            edit_lang = hit.entry.lang if hit is not None else test_lang
            examples = select_examples(payload.text, dataset, (test_lang, edit_lang), shots,
                                       backends.embedder, strategy=base_config.example_strategy,
                                       seed=base_config.seed)

        plan = build_plan(mode, payload.text, test_lang, retrieved=hit, kb=kb.entries(),
                          examples=examples)
        rendered = render(plan)

        request = GenerationRequest(prompt=payload.text,
                                    max_new_tokens=base_config.max_new_tokens,
                                    stop_sequences=base_config.stop_sequences,
                                    temperature=0.0)
        pre = generate(request, backends.generator)
        post = generate(GenerationRequest(prompt=rendered.text,
                                          max_new_tokens=base_config.max_new_tokens,
                                          stop_sequences=base_config.stop_sequences,
                                          temperature=0.0),
                        backends.generator)
        retrieved = None
        if hit is not None:
            retrieved = {
                "id": hit.entry.id,
                "lang": hit.entry.lang.value,
                "question": hit.entry.question,
                "answer": hit.entry.answer,
                "probability": hit.decision.probability,
            }
        return {
            "retrieved": retrieved,
            "mode": plan.mode.value,
            "prompt": rendered.text,
            "pre_edit_answer": pre.text,
            "answer": post.text,
            "latency": {
                "retrieval_ms": retrieval_s * 1000.0,
                "generation_ms": (pre.latency_s + post.latency_s) * 1000.0,
            },
        }

    @app.post("/api/eval", status_code=202)
    def start_eval(payload: EvalIn) -> dict:
        if not dataset:
            raise ValidationError("evaluation needs a dataset; start the service with one")
        edit_codes = _langs(payload.edit_langs)
        test_codes = _langs(payload.test_langs)
        run = RunConfig(
            mode=PromptMode.parse(payload.mode) if payload.mode else base_config.mode,
            shots=payload.shots if payload.shots is not None else base_config.shots,
            example_strategy=payload.strategy or base_config.example_strategy,
            scorer=base_config.scorer,
            seed=payload.seed if payload.seed is not None else base_config.seed,
            concurrency=payload.concurrency or base_config.concurrency,
            max_new_tokens=base_config.max_new_tokens,
            stop_sequences=base_config.stop_sequences,
        )
        with jobs_lock:
            job_counter["n"] += 1
            job = EvalJob(job_id=f"job-{job_counter['n']:04d}",
                          total=len(edit_codes) * len(test_codes))
            jobs[job.job_id] = job

        def on_progress(done: int, total: int) -> None:
            job.done, job.total = done, total

        def worker() -> None:
            job.status = "running"
            try:
                job.report = run_matrix(dataset, edit_codes, test_codes, run, backends,
                                        progress=on_progress)
                job.status = "done"
            except Exception as exc:  # survive worker crashes; report, don't raise
                job.status = "failed"
                job.error = str(exc)

        threading.Thread(target=worker, name=job.job_id, daemon=True).start()
        return {"job_id": job.job_id}

    def _job(job_id: str) -> EvalJob:
        with jobs_lock:
            job = jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"no job {job_id!r}")
        return job

    @app.get("/api/eval/{job_id}")
    def eval_status(job_id: str) -> dict:
        job = _job(job_id)
        return {
            "job_id": job.job_id,
            "status": job.status,
            "progress": {"done": job.done, "total": job.total},
            "error": job.error,
        }

    def _finished_report(job_id: str) -> EvalReport:
        job = _job(job_id)
        if job.status == "failed":
            raise HTTPException(status_code=409, detail=f"job failed: {job.error}")
        if job.report is None:
            raise HTTPException(status_code=409, detail=f"job is {job.status}; report not ready")
        return job.report

    # The .csv route must register first: the bare {job_id} pattern would
    # otherwise swallow "job-0001.csv" whole.
    @app.get("/api/reports/{job_id}.csv", response_class=PlainTextResponse)
    def report_csv(job_id: str) -> str:
        return _finished_report(job_id).to_csv()

    @app.get("/api/reports/{job_id}")
    def report_json(job_id: str, include_timing: bool = True) -> dict:
        return _finished_report(job_id).to_dict(include_timing=include_timing)

    static_dir = Path(settings.static_dir) if settings.static_dir else None
    if static_dir is not None and static_dir.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=static_dir, html=True), name="console")

    return app
